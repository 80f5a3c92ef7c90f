//! Small dense semidefinite programs by a log-barrier interior-point method.
//!
//! Problem form: minimise cᵀx subject to F_b(x) = F_b0 + Σ x_i F_bi ≺ 0 for
//! every block b. Phase I finds a strictly feasible point by minimising the
//! largest eigenvalue bound τ; phase II follows the central path.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::SynthesisError;

#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub f0: DMatrix<f64>,
    /// One coefficient matrix per decision variable (use a zero matrix if unused).
    pub fi: Vec<DMatrix<f64>>,
    /// Caller tag reported when this block blocks feasibility.
    pub tag: usize,
}

impl LmiBlock {
    pub fn size(&self) -> usize {
        self.f0.nrows()
    }

    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut f = self.f0.clone();
        for (xi, fi) in x.iter().zip(&self.fi) {
            if *xi != 0.0 {
                f += fi * *xi;
            }
        }
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sdp {
    pub c: DVector<f64>,
    pub blocks: Vec<LmiBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSettings {
    /// Required margin: every block must satisfy F_b(x) ≼ −margin·I after
    /// each block is normalised to unit coefficient scale.
    pub margin: f64,
    /// Relative duality-gap target of phase II.
    pub gap_tol: f64,
    pub max_newton: usize,
    /// Phase I keeps |x_i| < box_radius so that its barrier stays bounded.
    pub box_radius: f64,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self {
            margin: 1e-9,
            gap_tol: 1e-7,
            max_newton: 2000,
            box_radius: 1e8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SdpOutcome {
    Solved { x: DVector<f64>, objective: f64 },
    /// No strictly feasible point; `tag` of the block with the largest violation
    /// at the phase-I optimum, and that optimum (≥ 0).
    Infeasible { tag: usize, slack: f64 },
}

struct Prepared {
    blocks: Vec<LmiBlock>,
    m: usize,
}

fn normalise(sdp: &Sdp, margin: f64) -> Prepared {
    let blocks = sdp
        .blocks
        .iter()
        .map(|b| {
            let scale = b.fi.iter().map(|f| f.amax()).fold(b.f0.amax(), f64::max).max(1e-300);
            let n = b.size();
            LmiBlock {
                f0: &b.f0 / scale + DMatrix::identity(n, n) * margin,
                fi: b.fi.iter().map(|f| f / scale).collect(),
                tag: b.tag,
            }
        })
        .collect::<Vec<_>>();
    let m = blocks.iter().map(LmiBlock::size).sum();
    Prepared { blocks, m }
}

/// Barrier f(x) = t cᵀx − Σ log det(−F_b(x)); `None` outside the domain.
fn barrier(blocks: &[LmiBlock], c: &DVector<f64>, t: f64, x: &DVector<f64>) -> Option<f64> {
    let mut f = t * c.dot(x);
    for b in blocks {
        let s = -b.eval(x);
        let ch = Cholesky::new(s)?;
        f -= 2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    }
    f.is_finite().then_some(f)
}

/// Coefficient matrices stored by structure: most are a few unit entries.
enum Coef {
    Zero,
    Sparse(Vec<(usize, usize, f64)>),
    Dense(DMatrix<f64>),
}

fn structure(f: &DMatrix<f64>) -> Coef {
    let entries: Vec<(usize, usize, f64)> = (0..f.ncols())
        .flat_map(|j| (0..f.nrows()).map(move |i| (i, j)))
        .filter_map(|(i, j)| (f[(i, j)] != 0.0).then(|| (i, j, f[(i, j)])))
        .collect();
    match entries.len() {
        0 => Coef::Zero,
        n if n <= 2 * f.nrows() => Coef::Sparse(entries),
        _ => Coef::Dense(f.clone()),
    }
}

fn grad_hess(blocks: &[LmiBlock], c: &DVector<f64>, t: f64, x: &DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let nv = x.len();
    let mut g = c * t;
    let mut h = DMatrix::zeros(nv, nv);
    for b in blocks {
        let s = -b.eval(x);
        let ch: Cholesky<f64, Dyn> = Cholesky::new(s)?;
        let w = ch.inverse();
        let coefs: Vec<Coef> = b.fi.iter().map(structure).collect();
        // for dense F_j keep A_j = W F_j and A_j W
        let dense: Vec<Option<(DMatrix<f64>, DMatrix<f64>)>> = coefs
            .iter()
            .map(|cf| match cf {
                Coef::Dense(f) => {
                    let a = &w * f;
                    let aw = &a * &w;
                    Some((a, aw))
                }
                _ => None,
            })
            .collect();
        for i in 0..nv {
            g[i] += match &coefs[i] {
                Coef::Zero => continue,
                Coef::Sparse(e) => e.iter().map(|&(r, q, v)| v * w[(q, r)]).sum(),
                Coef::Dense(_) => dense[i].as_ref().unwrap().0.trace(),
            };
            for j in 0..=i {
                // tr(W F_i W F_j)
                let v = match (&coefs[i], &coefs[j]) {
                    (Coef::Zero, _) | (_, Coef::Zero) => continue,
                    (Coef::Sparse(ei), Coef::Sparse(ej)) => {
                        let mut acc = 0.0;
                        for &(a, bb, vi) in ei {
                            for &(cc, d, vj) in ej {
                                acc += vi * vj * w[(bb, cc)] * w[(d, a)];
                            }
                        }
                        acc
                    }
                    (Coef::Sparse(e), Coef::Dense(_)) | (Coef::Dense(_), Coef::Sparse(e)) => {
                        let k = if matches!(coefs[i], Coef::Dense(_)) { i } else { j };
                        let aw = &dense[k].as_ref().unwrap().1;
                        e.iter().map(|&(a, bb, v)| v * aw[(bb, a)]).sum()
                    }
                    (Coef::Dense(_), Coef::Dense(_)) => {
                        let ai = &dense[i].as_ref().unwrap().0;
                        let aj = &dense[j].as_ref().unwrap().0;
                        ai.component_mul(&aj.transpose()).sum()
                    }
                };
                h[(i, j)] += v;
                if i != j {
                    h[(j, i)] += v;
                }
            }
        }
    }
    Some((g, h))
}

fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> DVector<f64> {
    let n = g.len();
    let scale = h.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    loop {
        let hr = h + DMatrix::identity(n, n) * (reg * scale);
        if let Some(ch) = hr.cholesky() {
            return -ch.solve(g);
        }
        reg = if reg == 0.0 { 1e-14 } else { reg * 100.0 };
        if reg > 1.0 {
            return -g / scale;
        }
    }
}

/// Newton centring at fixed t. `stop` allows an early exit (phase I).
fn centre(
    blocks: &[LmiBlock],
    c: &DVector<f64>,
    t: f64,
    x: &mut DVector<f64>,
    budget: &mut usize,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> Result<bool, SynthesisError> {
    let mut fx = barrier(blocks, c, t, x).ok_or_else(|| SynthesisError::SolverFailure("iterate left the domain".into()))?;
    loop {
        if stop(x) {
            return Ok(true);
        }
        if *budget == 0 {
            return Err(SynthesisError::SolverFailure("Newton iteration limit reached".into()));
        }
        *budget -= 1;
        let (g, h) = grad_hess(blocks, c, t, x).ok_or_else(|| SynthesisError::SolverFailure("iterate left the domain".into()))?;
        let dx = newton_direction(&g, &h);
        let dec = -g.dot(&dx);
        if !dec.is_finite() {
            return Err(SynthesisError::SolverFailure("non-finite Newton step".into()));
        }
        if dec * 0.5 < 1e-9 {
            return Ok(false);
        }
        let mut s = 1.0;
        let mut accepted = false;
        while s > 1e-14 {
            let trial = &*x + &dx * s;
            if let Some(ft) = barrier(blocks, c, t, &trial) {
                if ft <= fx - 0.25 * s * dec {
                    if fx - ft <= 1e-14 * fx.abs() {
                        // progress is below rounding of the barrier value
                        *x = trial;
                        return Ok(false);
                    }
                    *x = trial;
                    fx = ft;
                    accepted = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !accepted {
            // numerically converged: no representable descent left
            return Ok(false);
        }
    }
}

fn max_eig(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().max()
}

/// Solve from an arbitrary starting point `x0`.
pub fn solve_sdp(sdp: &Sdp, x0: &DVector<f64>, settings: &SdpSettings) -> Result<SdpOutcome, SynthesisError> {
    let nv = sdp.c.len();
    if x0.len() != nv || sdp.blocks.iter().any(|b| b.fi.len() != nv) {
        return Err(SynthesisError::InvalidProblem("SDP variable count mismatch".into()));
    }
    let prep = normalise(sdp, settings.margin);
    let mut budget = settings.max_newton;

    // Phase I over (x, τ): F_b(x) − τI ≺ 0 and τ > −1.
    let worst = prep.blocks.iter().map(|b| max_eig(&b.eval(x0))).fold(f64::NEG_INFINITY, f64::max);
    let x = if worst < 0.0 {
        x0.clone()
    } else {
        let mut ph1: Vec<LmiBlock> = prep
            .blocks
            .iter()
            .map(|b| {
                let mut fi = b.fi.clone();
                fi.push(-DMatrix::identity(b.size(), b.size()));
                LmiBlock { f0: b.f0.clone(), fi, tag: b.tag }
            })
            .collect();
        let mut floor = vec![DMatrix::zeros(1, 1); nv];
        floor.push(DMatrix::from_element(1, 1, -1.0));
        ph1.push(LmiBlock {
            f0: DMatrix::from_element(1, 1, -1.0),
            fi: floor,
            tag: usize::MAX,
        });
        let r = settings.box_radius * (1.0 + x0.amax());
        let mut bound = Vec::with_capacity(nv + 1);
        for i in 0..=nv {
            let mut m = DMatrix::zeros(2 * nv, 2 * nv);
            if i < nv {
                m[(2 * i, 2 * i)] = 1.0 / r;
                m[(2 * i + 1, 2 * i + 1)] = -1.0 / r;
            }
            bound.push(m);
        }
        ph1.push(LmiBlock {
            f0: -DMatrix::identity(2 * nv, 2 * nv),
            fi: bound,
            tag: usize::MAX,
        });
        let mut c1 = DVector::zeros(nv + 1);
        c1[nv] = 1.0;
        let mut y = DVector::zeros(nv + 1);
        y.rows_mut(0, nv).copy_from(x0);
        y[nv] = worst.abs() * 1.1 + 1.0;
        let m1 = (prep.m + 1) as f64;
        let mut t = 1.0;
        let feasible = |y: &DVector<f64>| y[nv] < 0.0;
        loop {
            if centre(&ph1, &c1, t, &mut y, &mut budget, &feasible)? {
                break;
            }
            if m1 / t < 1e-10 {
                // τ has converged to its optimum without crossing zero
                let xs = y.rows(0, nv).into_owned();
                let (tag, slack) = prep
                    .blocks
                    .iter()
                    .map(|b| (b.tag, max_eig(&b.eval(&xs))))
                    .fold((usize::MAX, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
                return Ok(SdpOutcome::Infeasible { tag, slack: slack.max(0.0) });
            }
            t *= 10.0;
        }
        y.rows(0, nv).into_owned()
    };

    // Phase II.
    let mut x = x;
    let m = prep.m as f64;
    let scale = sdp.c.amax().max(1e-300);
    let c = &sdp.c / scale;
    let mut t = 1.0;
    loop {
        centre(&prep.blocks, &c, t, &mut x, &mut budget, &|_| false)?;
        let obj = c.dot(&x);
        if m / t <= settings.gap_tol * obj.abs().max(1e-12) || m / t < 1e-14 {
            break;
        }
        t *= 10.0;
    }
    let objective = sdp.c.dot(&x);
    Ok(SdpOutcome::Solved { x, objective })
}
