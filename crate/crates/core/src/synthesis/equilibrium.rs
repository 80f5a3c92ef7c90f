//! Equilibrium poses: every coordinate of the mechanism at zero.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::SynthesisError;
use crate::mechanisms::MechanismSpec;
use crate::opspace::ReferenceSample;

pub const EQUILIBRIUM_TOL: f64 = 1e-12;
const MAX_ITERATIONS: usize = 200;

/// Solve z_c(q_e) = 0 with the reference held at `target` by damped Newton
/// (Levenberg–Marquardt) iterations started from `guess` (robot joints only;
/// the virtual joints start from their closed-form projection).
pub fn find_equilibrium_pose(
    spec: &MechanismSpec,
    target: &Vector3<f64>,
    guess: &DVector<f64>,
) -> Result<DVector<f64>, SynthesisError> {
    let ext = spec.initial_extension_state(guess)?;
    let qe0 = spec.join(guess, &ext.qc);
    solve_from(spec, target, qe0)
}

/// As [`find_equilibrium_pose`] but starting from a full extended configuration.
pub fn solve_from(spec: &MechanismSpec, target: &Vector3<f64>, mut qe: DVector<f64>) -> Result<DVector<f64>, SynthesisError> {
    let reference = ReferenceSample::fixed(*target);
    let eval = |q: &DVector<f64>| spec.coordinates(q, &reference);
    let mut e = eval(&qe)?;
    let mut cost = e.z.norm_squared();
    let mut lambda = 1e-6;
    let n = qe.len();
    for _ in 0..MAX_ITERATIONS {
        if e.z.amax() < EQUILIBRIUM_TOL {
            return Ok(qe);
        }
        let jt = e.jac.transpose();
        let jtj = &jt * &e.jac;
        let g = &jt * &e.z;
        let mut improved = false;
        for _ in 0..30 {
            let a = &jtj + DMatrix::identity(n, n) * (lambda * (1.0 + jtj.diagonal().amax()));
            let Some(step) = a.cholesky().map(|c| c.solve(&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &qe - &step;
            let et = eval(&trial)?;
            let ct = et.z.norm_squared();
            if ct.is_finite() && ct < cost {
                qe = trial;
                e = et;
                cost = ct;
                lambda = (lambda * 0.1).max(1e-15);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            if e.z.amax() < EQUILIBRIUM_TOL {
                return Ok(qe);
            }
            return Err(SynthesisError::Unreachable { residual: e.z.amax() });
        }
    }
    if e.z.amax() < EQUILIBRIUM_TOL {
        Ok(qe)
    } else {
        Err(SynthesisError::IterationLimit { residual: e.z.amax() })
    }
}

/// Target points of an evenly spaced grid between two corners, first
/// coordinate varying slowest; z follows the first coordinate.
pub fn pose_grid(corner_a: &Vector3<f64>, corner_b: &Vector3<f64>, nx: usize, ny: usize) -> Vec<Vector3<f64>> {
    let lerp = |a: f64, b: f64, i: usize, n: usize| if n <= 1 { 0.5 * (a + b) } else { a + (b - a) * i as f64 / (n - 1) as f64 };
    let mut out = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            out.push(Vector3::new(
                lerp(corner_a.x, corner_b.x, i, nx),
                lerp(corner_a.y, corner_b.y, j, ny),
                lerp(corner_a.z, corner_b.z, i, nx),
            ));
        }
    }
    out
}
