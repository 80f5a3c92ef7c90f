//! Gain synthesis: equilibrium poses, linearisation, LMI design and H∞ verification.
//!
//! The design works in operation-space coordinates x = J_c δq, where the
//! linearised closed loop is Λ ẍ + C ẋ + K x = B F_d with Λ = J_c⁻ᵀ M_e J_c⁻¹,
//! B = J_c⁻ᵀ J_dᵀ and outputs z_d = Bᵀ x. With the energy-like Lyapunov matrix
//! P = [[K, εΛ], [εΛ, Λ]] (ε > 0 fixed) and σ the inverse storage scale, the
//! bounded-real inequality is linear in (k, c, σ):
//!
//! ```text
//! ⎡ −2εK + (σ/γ)BW₁ᵀW₁Bᵀ   −εC                        εB   ⎤
//! ⎢ −εC                    2εΛ − 2C + (σ/γ)BW₂ᵀW₂Bᵀ   B    ⎥ ≺ 0,   P ≻ 0
//! ⎣ εBᵀ                    Bᵀ                        −σγI ⎦
//! ```
//!
//! One (k, c) pair must satisfy the inequality at every pose; ε is chosen by a
//! logarithmic search. Every result is re-verified independently.

pub mod equilibrium;
pub mod gains;
pub mod hinf;
pub mod plant;
pub mod sdp;

use nalgebra::{DMatrix, DVector};

use crate::error::SynthesisError;
use sdp::{LmiBlock, Sdp, SdpOutcome, SdpSettings};

pub use equilibrium::{find_equilibrium_pose, pose_grid, solve_from};
pub use gains::{parse_gains, write_gains, GainsFile};
pub use hinf::{hinf_norm, verify_hinf, HinfReport};
pub use plant::{linearize, Channel, LinearizedPlant, DEFAULT_CHANNELS};

/// Tag of the sign/bound blocks (not tied to a pose).
const GLOBAL_TAG: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisProblem {
    pub plants: Vec<LinearizedPlant>,
    pub gamma: f64,
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    /// Optional upper bound on every stiffness.
    pub k_max: Option<f64>,
    /// Objective weights on k and c; defaults to 1/Λ̄ᵢ and 1/√Λ̄ᵢ, with Λ̄ the
    /// pose-averaged operation-space inertia diagonal.
    pub weights: Option<(DVector<f64>, DVector<f64>)>,
    /// Candidate ε values for the Lyapunov cross term.
    pub epsilons: Vec<f64>,
}

impl SynthesisProblem {
    pub fn new(plants: Vec<LinearizedPlant>, gamma: f64, w1: DMatrix<f64>, w2: DMatrix<f64>) -> Self {
        Self {
            plants,
            gamma,
            w1,
            w2,
            k_max: None,
            weights: None,
            epsilons: default_epsilons(),
        }
    }
}

/// 1e-3 … 10, three points per decade.
pub fn default_epsilons() -> Vec<f64> {
    (0..=12).map(|i| 10f64.powf(-3.0 + i as f64 / 3.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub gamma: f64,
    pub gamma_achieved: Vec<f64>,
    pub sweep: Vec<f64>,
    pub cond: Vec<f64>,
    pub epsilon: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub k: DVector<f64>,
    pub c: DVector<f64>,
    pub certificate: Option<Certificate>,
}

struct PoseData {
    lambda: DMatrix<f64>,
    b: DMatrix<f64>,
}

fn pose_data(p: &LinearizedPlant) -> Result<PoseData, SynthesisError> {
    let jinv = p
        .jc
        .clone()
        .try_inverse()
        .ok_or(SynthesisError::SingularJacobian { pose: p.pose, cond: f64::INFINITY })?;
    let lambda = jinv.transpose() * &p.m * &jinv;
    let lambda = (&lambda + lambda.transpose()) * 0.5;
    let b = jinv.transpose() * p.jd.transpose();
    Ok(PoseData { lambda, b })
}

fn unit(n: usize, i: usize, j: usize, v: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    m[(i, j)] = v;
    m
}

fn build_sdp(problem: &SynthesisProblem, data: &[PoseData], eps: f64, cost: &DVector<f64>) -> Sdp {
    let n = problem.plants[0].dof();
    let nv = 2 * n + 1;
    let (gamma, w1, w2) = (problem.gamma, &problem.w1, &problem.w2);
    let rate = w2.amax() > 0.0;
    let mut blocks = Vec::new();
    for (p, pd) in problem.plants.iter().zip(data) {
        let d = pd.b.ncols();
        let size = 2 * n + d;
        let bt = pd.b.transpose();
        let mut f0 = DMatrix::zeros(size, size);
        f0.view_mut((0, 2 * n), (n, d)).copy_from(&(&pd.b * eps));
        f0.view_mut((2 * n, 0), (d, n)).copy_from(&(&bt * eps));
        f0.view_mut((n, n), (n, n)).copy_from(&(&pd.lambda * (2.0 * eps)));
        f0.view_mut((n, 2 * n), (n, d)).copy_from(&pd.b);
        f0.view_mut((2 * n, n), (d, n)).copy_from(&bt);
        let mut fi = Vec::with_capacity(nv);
        for i in 0..n {
            fi.push(unit(size, i, i, -2.0 * eps));
        }
        for i in 0..n {
            let mut m = unit(size, n + i, n + i, -2.0);
            m[(i, n + i)] = -eps;
            m[(n + i, i)] = -eps;
            fi.push(m);
        }
        let mut fs = DMatrix::zeros(size, size);
        let q1 = &pd.b * w1.transpose() * w1 * &bt / gamma;
        fs.view_mut((0, 0), (n, n)).copy_from(&q1);
        if rate {
            let q2 = &pd.b * w2.transpose() * w2 * &bt / gamma;
            fs.view_mut((n, n), (n, n)).copy_from(&q2);
        }
        fs.view_mut((2 * n, 2 * n), (d, d)).fill_diagonal(-gamma);
        fi.push(fs);
        blocks.push(LmiBlock { f0, fi, tag: p.pose });

        // P ≻ 0
        let mut p0 = DMatrix::zeros(2 * n, 2 * n);
        p0.view_mut((0, n), (n, n)).copy_from(&(&pd.lambda * -eps));
        p0.view_mut((n, 0), (n, n)).copy_from(&(&pd.lambda * -eps));
        p0.view_mut((n, n), (n, n)).copy_from(&-&pd.lambda);
        let pfi = (0..nv)
            .map(|j| if j < n { unit(2 * n, j, j, -1.0) } else { DMatrix::zeros(2 * n, 2 * n) })
            .collect();
        blocks.push(LmiBlock { f0: p0, fi: pfi, tag: p.pose });
    }
    let signs = (0..nv).map(|j| unit(nv, j, j, -1.0)).collect();
    blocks.push(LmiBlock {
        f0: DMatrix::zeros(nv, nv),
        fi: signs,
        tag: GLOBAL_TAG,
    });
    if let Some(kmax) = problem.k_max {
        let fi = (0..nv)
            .map(|j| if j < n { unit(n, j, j, 1.0) } else { DMatrix::zeros(n, n) })
            .collect();
        blocks.push(LmiBlock {
            f0: DMatrix::identity(n, n) * -kmax,
            fi,
            tag: GLOBAL_TAG,
        });
    }
    let mut c = DVector::zeros(nv);
    c.rows_mut(0, 2 * n).copy_from(cost);
    Sdp { c, blocks }
}

fn default_weights(data: &[PoseData], n: usize) -> DVector<f64> {
    let mut mean = DVector::zeros(n);
    for d in data {
        mean += d.lambda.diagonal();
    }
    mean /= data.len() as f64;
    let mut w = DVector::zeros(2 * n);
    for i in 0..n {
        let l = mean[i].max(1e-12);
        w[i] = 1.0 / l;
        w[n + i] = 1.0 / l.sqrt();
    }
    w
}

fn validate(problem: &SynthesisProblem) -> Result<(), SynthesisError> {
    let first = problem
        .plants
        .first()
        .ok_or_else(|| SynthesisError::InvalidProblem("at least one pose is required".into()))?;
    let (n, d) = (first.dof(), first.channels());
    if problem.plants.iter().any(|p| p.dof() != n || p.channels() != d) {
        return Err(SynthesisError::InvalidProblem("all plants must share dimensions".into()));
    }
    if !(problem.gamma > 0.0 && problem.gamma.is_finite()) {
        return Err(SynthesisError::InvalidProblem("gamma must be positive".into()));
    }
    for (name, w) in [("W1", &problem.w1), ("W2", &problem.w2)] {
        if w.nrows() != d || w.ncols() != d {
            return Err(SynthesisError::InvalidProblem(format!("{name} must be {d}×{d}")));
        }
        let sym = (w + w.transpose()) * 0.5;
        if (w - &sym).amax() > 1e-12 || sym.symmetric_eigenvalues().min() < -1e-12 {
            return Err(SynthesisError::InvalidProblem(format!("{name} must be symmetric positive semidefinite")));
        }
    }
    if problem.w1.amax() == 0.0 && problem.w2.amax() == 0.0 {
        return Err(SynthesisError::InvalidProblem("W1 and W2 are both zero".into()));
    }
    if let Some((wk, wc)) = &problem.weights {
        if wk.len() != n || wc.len() != n || wk.iter().chain(wc.iter()).any(|v| !(*v >= 0.0)) {
            return Err(SynthesisError::InvalidProblem("objective weights must be non-negative, one per row".into()));
        }
    }
    if problem.epsilons.is_empty() || problem.epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(SynthesisError::InvalidProblem("epsilon candidates must be positive".into()));
    }
    Ok(())
}

/// Structured diagonal (k, c) satisfying the bounded-real inequality at every pose.
pub fn synthesize_gains(problem: &SynthesisProblem) -> Result<GainSet, SynthesisError> {
    validate(problem)?;
    let n = problem.plants[0].dof();
    let data = problem.plants.iter().map(pose_data).collect::<Result<Vec<_>, _>>()?;
    let cost = match &problem.weights {
        Some((wk, wc)) => {
            let mut w = DVector::zeros(2 * n);
            w.rows_mut(0, n).copy_from(wk);
            w.rows_mut(n, n).copy_from(wc);
            w
        }
        None => default_weights(&data, n),
    };
    let mut x0 = DVector::from_element(2 * n + 1, 1.0);
    if let Some(kmax) = problem.k_max {
        x0.rows_mut(0, n).fill(0.5 * kmax.min(1.0));
    }
    let settings = SdpSettings::default();

    let outcomes: Vec<(f64, Result<SdpOutcome, SynthesisError>)> = std::thread::scope(|s| {
        let handles: Vec<_> = problem
            .epsilons
            .iter()
            .map(|&eps| {
                let (data, cost, x0, settings) = (&data, &cost, &x0, &settings);
                s.spawn(move || (eps, sdp::solve_sdp(&build_sdp(problem, data, eps, cost), x0, settings)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    });

    let mut solved: Vec<(f64, f64, DVector<f64>)> = Vec::new();
    let mut best_infeasible: Option<(usize, f64)> = None;
    let mut failure = None;
    for (eps, out) in outcomes {
        match out {
            Ok(SdpOutcome::Solved { x, objective }) => solved.push((objective, eps, x)),
            Ok(SdpOutcome::Infeasible { tag, slack }) => {
                if best_infeasible.is_none_or(|(_, s)| slack < s) {
                    best_infeasible = Some((tag, slack));
                }
            }
            Err(e) => failure = Some(e),
        }
    }
    solved.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (objective, epsilon, x) in solved {
        let k = x.rows(0, n).into_owned();
        let c = x.rows(n, n).into_owned();
        if k.iter().chain(c.iter()).any(|v| !(*v >= 0.0)) {
            continue;
        }
        let mut achieved = Vec::new();
        let mut sweep = Vec::new();
        let mut ok = true;
        for p in &problem.plants {
            match verify_hinf(p, &k, &c, &problem.w1, &problem.w2) {
                Ok(r) if r.gamma <= problem.gamma * (1.0 + 1e-6) => {
                    achieved.push(r.gamma);
                    sweep.push(r.sweep);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(GainSet {
                k,
                c,
                certificate: Some(Certificate {
                    gamma: problem.gamma,
                    gamma_achieved: achieved,
                    sweep,
                    cond: problem.plants.iter().map(|p| p.cond).collect(),
                    epsilon,
                    objective,
                }),
            });
        }
    }
    if let Some((tag, slack)) = best_infeasible {
        let pose = if tag == GLOBAL_TAG { 0 } else { tag };
        return Err(SynthesisError::Infeasible { pose, slack });
    }
    Err(failure.unwrap_or_else(|| SynthesisError::SolverFailure("no candidate passed verification".into())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassivityReport {
    pub passed: bool,
    /// (row, "k" or "c") of negative entries.
    pub negative: Vec<(usize, &'static str)>,
    /// Rows with a zero entry: passive, but only marginally.
    pub zero: Vec<(usize, &'static str)>,
}

/// Non-negative springs and dampers make the virtual mechanism passive.
pub fn passivity_check(k: &DVector<f64>, c: &DVector<f64>) -> PassivityReport {
    let mut negative = Vec::new();
    let mut zero = Vec::new();
    for (name, v) in [("k", k), ("c", c)] {
        for (i, x) in v.iter().enumerate() {
            if !(*x >= 0.0) {
                negative.push((i, name));
            } else if *x == 0.0 {
                zero.push((i, name));
            }
        }
    }
    PassivityReport {
        passed: negative.is_empty(),
        negative,
        zero,
    }
}
