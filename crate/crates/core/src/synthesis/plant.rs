//! Small-signal models of the closed loop at equilibrium poses.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::dynamics::Kinematics;
use crate::error::SynthesisError;
use crate::mechanisms::MechanismSpec;
use crate::opspace::ReferenceSample;
use crate::urdf::{INSTRUMENT_BASE, INSTRUMENT_TIP};

pub const RESIDUAL_TOL: f64 = 1e-8;
pub const COND_REJECT: f64 = 1e6;
pub const COND_WARN: f64 = 1e3;

/// Exogenous force channel: a 3-D force at a point of the robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    InstrumentTip,
    InstrumentBase,
}

impl Channel {
    pub fn frame(self) -> &'static str {
        match self {
            Channel::InstrumentTip => INSTRUMENT_TIP,
            Channel::InstrumentBase => INSTRUMENT_BASE,
        }
    }

    pub fn parse(name: &str) -> Option<Channel> {
        match name {
            "tip" | "instrument_tip" => Some(Channel::InstrumentTip),
            "base" | "instrument_base" => Some(Channel::InstrumentBase),
            _ => None,
        }
    }
}

pub const DEFAULT_CHANNELS: [Channel; 2] = [Channel::InstrumentTip, Channel::InstrumentBase];

/// M_e δq̈ + J_cᵀ diag(c) J_c δq̇ + J_cᵀ diag(k) J_c δq = J_dᵀ δF_d,
/// with performance outputs z_d = J_d δq.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedPlant {
    pub pose: usize,
    pub m: DMatrix<f64>,
    pub jc: DMatrix<f64>,
    pub jd: DMatrix<f64>,
    pub residual: f64,
    pub cond: f64,
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        sv.max() / min
    }
}

impl LinearizedPlant {
    /// Construct directly from matrices (for hand-built plants).
    pub fn new(pose: usize, m: DMatrix<f64>, jc: DMatrix<f64>, jd: DMatrix<f64>) -> Result<Self, SynthesisError> {
        let n = m.nrows();
        if m.ncols() != n || jc.nrows() != n || jc.ncols() != n || jd.ncols() != n {
            return Err(SynthesisError::InvalidProblem(format!(
                "plant {pose}: need n×n inertia and coordinate Jacobian and d×n disturbance Jacobian"
            )));
        }
        let cond = condition_number(&jc);
        if !(cond <= COND_REJECT) {
            return Err(SynthesisError::SingularJacobian { pose, cond });
        }
        Ok(Self { pose, m, jc, jd, residual: 0.0, cond })
    }

    pub fn dof(&self) -> usize {
        self.m.nrows()
    }

    pub fn channels(&self) -> usize {
        self.jd.nrows()
    }

    /// First-order form with x = (δq, δq̇).
    pub fn state_space(&self, k: &DVector<f64>, c: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), SynthesisError> {
        let n = self.dof();
        let minv = self
            .m
            .clone()
            .cholesky()
            .ok_or_else(|| SynthesisError::InvalidProblem(format!("pose {}: inertia not positive definite", self.pose)))?
            .inverse();
        let jt = self.jc.transpose();
        let stiff = &minv * &jt * DMatrix::from_diagonal(k) * &self.jc;
        let damp = &minv * &jt * DMatrix::from_diagonal(c) * &self.jc;
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        a.view_mut((0, n), (n, n)).fill_with_identity();
        a.view_mut((n, 0), (n, n)).copy_from(&-stiff);
        a.view_mut((n, n), (n, n)).copy_from(&-damp);
        let mut b = DMatrix::zeros(2 * n, self.channels());
        b.view_mut((n, 0), (n, self.channels())).copy_from(&(&minv * self.jd.transpose()));
        Ok((a, b))
    }

    /// Output matrix for (W1 z_d, W2 ż_d); the W2 rows are omitted when W2 = 0.
    pub fn output_matrix(&self, w1: &DMatrix<f64>, w2: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, d) = (self.dof(), self.channels());
        let with_rate = w2.amax() > 0.0;
        let rows = if with_rate { 2 * d } else { d };
        let mut c = DMatrix::zeros(rows, 2 * n);
        c.view_mut((0, 0), (d, n)).copy_from(&(w1 * &self.jd));
        if with_rate {
            c.view_mut((d, n), (d, n)).copy_from(&(w2 * &self.jd));
        }
        c
    }
}

/// Disturbance Jacobian of the selected channels over the extended coordinates.
pub fn disturbance_jacobian(spec: &MechanismSpec, qe: &DVector<f64>, channels: &[Channel]) -> Result<DMatrix<f64>, SynthesisError> {
    let kin = Kinematics::new(&spec.extended, qe)?;
    let mut jd = DMatrix::zeros(3 * channels.len(), qe.len());
    for (i, ch) in channels.iter().enumerate() {
        let f = spec.extended.frame(ch.frame())?;
        jd.view_mut((3 * i, 0), (3, qe.len()))
            .copy_from(&kin.point_jacobian(&spec.extended, &f, &Vector3::zeros()));
    }
    Ok(jd)
}

/// Linearise the gravity-compensated closed loop about an equilibrium `qe`
/// at which the reference sits at `target`. Exact at equilibrium: the spring
/// forces vanish there, so only J_cᵀ K J_c and J_cᵀ C J_c survive.
pub fn linearize(
    spec: &MechanismSpec,
    qe: &DVector<f64>,
    target: &Vector3<f64>,
    channels: &[Channel],
    pose: usize,
) -> Result<LinearizedPlant, SynthesisError> {
    let co = spec.coordinates(qe, &ReferenceSample::fixed(*target))?;
    let residual = co.z.amax();
    if !(residual <= RESIDUAL_TOL) {
        return Err(SynthesisError::NotEquilibrium { residual });
    }
    let n = spec.robot_dof();
    let q = qe.rows(0, n).into_owned();
    let qc = qe.rows(n, qe.len() - n).into_owned();
    let m = spec.extended_mass_matrix(&q, &qc)?;
    let jd = disturbance_jacobian(spec, qe, channels)?;
    let cond = condition_number(&co.jac);
    if !(cond <= COND_REJECT) {
        return Err(SynthesisError::SingularJacobian { pose, cond });
    }
    Ok(LinearizedPlant {
        pose,
        m,
        jc: co.jac,
        jd,
        residual,
        cond,
    })
}
