//! Closed-loop simulation of a robot driven by a virtual mechanism.
//!
//! The robot, the virtual joints and two energy accumulators (work supplied
//! at the ports and energy dissipated by the dampers) are integrated as one
//! state vector. External forces are sampled at the start of each step and
//! held over it.

pub mod metrics;
pub mod reference;

use nalgebra::{DVector, Vector3};

use crate::dynamics::Kinematics;
use crate::error::SimError;
use crate::mechanisms::{ExtensionState, MechanismSpec};
use crate::synthesis::Channel;
use crate::urdf::INSTRUMENT_TIP;

pub use metrics::{axis_rcm_distance, energy_balance_error, limit_violations, metrics, passivity_audit, write_csv, Metrics};
pub use reference::{eight_curve, Reference};

/// States beyond this magnitude are treated as a numerical blow-up.
pub const BLOWUP_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Rk4,
    SemiImplicitEuler,
}

impl Integrator {
    pub fn parse(name: &str) -> Option<Integrator> {
        match name {
            "rk4" => Some(Integrator::Rk4),
            "semi-implicit-euler" | "semi_implicit_euler" | "symplectic-euler" => Some(Integrator::SemiImplicitEuler),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub duration: f64,
    pub integrator: Integrator,
    /// Record every n-th step.
    pub decimation: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            duration: 20.0,
            integrator: Integrator::Rk4,
            decimation: 1,
        }
    }
}

impl SimConfig {
    fn steps(&self) -> Result<usize, SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration >= self.dt) || !self.duration.is_finite() {
            return Err(SimError::InvalidConfig(format!("duration must be at least dt, got {}", self.duration)));
        }
        if self.decimation == 0 {
            return Err(SimError::InvalidConfig("decimation must be at least 1".into()));
        }
        Ok((self.duration / self.dt).round() as usize)
    }
}

/// Force applied to a point of the robot, a function of time (N, world frame).
pub struct ExternalForce<'a> {
    pub port: Channel,
    pub force: &'a dyn Fn(f64) -> Vector3<f64>,
}

/// A rectangular force pulse train: `force` during [start + kT, start + kT + width).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseTrain {
    pub force: Vector3<f64>,
    pub start: f64,
    pub width: f64,
    /// Repetition period; a single pulse when not positive.
    pub period: f64,
}

impl PulseTrain {
    pub fn at(&self, t: f64) -> Vector3<f64> {
        let mut s = t - self.start;
        if s < 0.0 {
            return Vector3::zeros();
        }
        if self.period > 0.0 {
            s %= self.period;
        }
        if s < self.width {
            self.force
        } else {
            Vector3::zeros()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub ext: ExtensionState,
}

impl InitialState {
    /// Rest at an extended configuration q_e = (q, q_c).
    pub fn at_rest(spec: &MechanismSpec, qe: &DVector<f64>) -> Self {
        let (q, qc) = spec.split(qe);
        Self {
            q: q.into_owned(),
            qdot: DVector::zeros(spec.robot_dof()),
            ext: ExtensionState::at_rest(qc.into_owned()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub qe: DVector<f64>,
    pub qde: DVector<f64>,
    pub u: DVector<f64>,
    pub u_nog: DVector<f64>,
    pub ee_err: f64,
    pub rcm_dist: f64,
    /// Kinetic energy of robot and extension plus spring energy.
    pub energy: f64,
    /// Power supplied through the external port and the moving reference.
    pub port_power: f64,
    /// ∫ port power.
    pub work: f64,
    /// ∫ damper power.
    pub dissipated: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub robot_dof: usize,
    pub samples: Vec<TraceSample>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

struct Plant<'a> {
    spec: &'a MechanismSpec,
    reference: &'a Reference,
    port: Channel,
    n: usize,
    nc: usize,
}

/// Packed state: q, q_c, q̇, q̇_c, work, dissipated.
struct Eval {
    deriv: DVector<f64>,
    u: DVector<f64>,
    u_nog: DVector<f64>,
    energy: f64,
    port_power: f64,
    ee: Vector3<f64>,
}

impl Plant<'_> {
    fn ne(&self) -> usize {
        self.n + self.nc
    }

    fn unpack(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>, ExtensionState) {
        let (n, nc, ne) = (self.n, self.nc, self.ne());
        (
            x.rows(0, n).into_owned(),
            x.rows(ne, n).into_owned(),
            ExtensionState {
                qc: x.rows(n, nc).into_owned(),
                qdc: x.rows(ne + n, nc).into_owned(),
            },
        )
    }

    fn eval(&self, t: f64, x: &DVector<f64>, fe: &Vector3<f64>) -> Result<Eval, SimError> {
        let spec = self.spec;
        let (n, ne) = (self.n, self.ne());
        let (q, qdot, ext) = self.unpack(x);
        let r = self.reference.sample(t);
        let out = spec.controller_output(&q, &qdot, &ext, &r)?;

        let robot = &spec.robot;
        let kin = Kinematics::new(robot, &q)?;
        let port = robot.frame(self.port.frame())?;
        let jp = kin.point_jacobian(robot, &port, &Vector3::zeros());
        let tip = robot.frame(INSTRUMENT_TIP)?;
        let ee = kin.pose_of(&tip) * nalgebra::Point3::origin();
        let bias = kin.inverse_dynamics(robot, &qdot, &DVector::zeros(n), &spec.gravity);
        let m = kin.mass_matrix(robot);
        let rhs = &out.u + jp.transpose() * fe - bias;
        let qdd = m
            .cholesky()
            .ok_or_else(|| SimError::InvalidConfig("robot inertia lost positive definiteness".into()))?
            .solve(&rhs);

        let qde = spec.join(&qdot, &ext.qdc);
        let e_kin = 0.5 * qde.dot(&(spec.extended_mass_matrix(&q, &ext.qc)? * &qde));
        let energy = e_kin + spec.spring_energy(&out.z);
        let port_power = fe.dot(&(&jp * &qdot)) + out.dzdt.dot(&out.force);
        let dissipation = spec.damper_power(&out.zdot);

        let mut deriv = DVector::zeros(x.len());
        deriv.rows_mut(0, ne).copy_from(&qde);
        deriv.rows_mut(ne, n).copy_from(&qdd);
        deriv.rows_mut(ne + n, self.nc).copy_from(&out.qddot_c);
        deriv[2 * ne] = port_power;
        deriv[2 * ne + 1] = dissipation;
        Ok(Eval {
            deriv,
            u: out.u,
            u_nog: out.u_nog,
            energy,
            port_power,
            ee: ee.coords,
        })
    }

    fn sample(&self, t: f64, x: &DVector<f64>, fe: &Vector3<f64>) -> Result<TraceSample, SimError> {
        let e = self.eval(t, x, fe)?;
        let ne = self.ne();
        let q = x.rows(0, self.n).into_owned();
        Ok(TraceSample {
            t,
            qe: x.rows(0, ne).into_owned(),
            qde: x.rows(ne, ne).into_owned(),
            u: e.u,
            u_nog: e.u_nog,
            ee_err: (e.ee - self.reference.sample(t).position).norm(),
            rcm_dist: axis_rcm_distance(&self.spec.robot, &q, &self.spec.task.rcm)?,
            energy: e.energy,
            port_power: e.port_power,
            work: x[2 * ne],
            dissipated: x[2 * ne + 1],
        })
    }

    fn step(&self, integrator: Integrator, t: f64, x: &DVector<f64>, fe: &Vector3<f64>, h: f64) -> Result<DVector<f64>, SimError> {
        match integrator {
            Integrator::Rk4 => {
                let k1 = self.eval(t, x, fe)?.deriv;
                let k2 = self.eval(t + 0.5 * h, &(x + &k1 * (0.5 * h)), fe)?.deriv;
                let k3 = self.eval(t + 0.5 * h, &(x + &k2 * (0.5 * h)), fe)?.deriv;
                let k4 = self.eval(t + h, &(x + &k3 * h), fe)?.deriv;
                Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
            }
            Integrator::SemiImplicitEuler => {
                // velocities first, then positions with the new velocities
                let ne = self.ne();
                let d = self.eval(t, x, fe)?.deriv;
                let mut next = x.clone();
                for i in 0..ne {
                    next[ne + i] += h * d[ne + i];
                }
                for i in 0..ne {
                    next[i] += h * next[ne + i];
                }
                next[2 * ne] += h * d[2 * ne];
                next[2 * ne + 1] += h * d[2 * ne + 1];
                Ok(next)
            }
        }
    }
}

/// Integrate the closed loop from `init`. The mechanism gains are those in `spec`.
pub fn simulate(
    spec: &MechanismSpec,
    reference: &Reference,
    config: &SimConfig,
    init: &InitialState,
    external: Option<&ExternalForce>,
) -> Result<SimTrace, SimError> {
    let steps = config.steps()?;
    let (n, nc) = (spec.robot_dof(), spec.extension_dof());
    for (got, want) in [(init.q.len(), n), (init.qdot.len(), n), (init.ext.qc.len(), nc), (init.ext.qdc.len(), nc)] {
        if got != want {
            return Err(crate::error::ModelError::DimensionMismatch { expected: want, got }.into());
        }
    }
    let plant = Plant {
        spec,
        reference,
        port: external.map_or(Channel::InstrumentTip, |e| e.port),
        n,
        nc,
    };
    let ne = n + nc;
    let mut x = DVector::zeros(2 * ne + 2);
    x.rows_mut(0, n).copy_from(&init.q);
    x.rows_mut(n, nc).copy_from(&init.ext.qc);
    x.rows_mut(ne, n).copy_from(&init.qdot);
    x.rows_mut(ne + n, nc).copy_from(&init.ext.qdc);

    let force_at = |t: f64| external.map_or_else(Vector3::zeros, |e| (e.force)(t));
    let mut samples = Vec::with_capacity(steps / config.decimation + 2);
    samples.push(plant.sample(0.0, &x, &force_at(0.0))?);
    for k in 0..steps {
        let t = k as f64 * config.dt;
        x = plant.step(config.integrator, t, &x, &force_at(t), config.dt)?;
        let t_next = (k + 1) as f64 * config.dt;
        if x.iter().any(|v| !(v.abs() <= BLOWUP_LIMIT)) {
            return Err(SimError::IntegratorBlowup { t: t_next });
        }
        if (k + 1) % config.decimation == 0 {
            samples.push(plant.sample(t_next, &x, &force_at(t_next))?);
        }
    }
    Ok(SimTrace { robot_dof: n, samples })
}
