//! Scenario files: one TOML document describing robot, mechanism, synthesis and simulation.
//!
//! Paths inside a scenario are resolved relative to the scenario file.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::Deserialize;

use trocar_core::mechanisms::{build_prismatic_extension, build_virtual_instrument, relax_rcm_rectangular, MechanismSpec, RcmTask};
use trocar_core::sim::{Integrator, PulseTrain, Reference, SimConfig};
use trocar_core::synthesis::Channel;
use trocar_core::urdf::parse_urdf;
use trocar_core::KinematicTree;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: Option<String>,
    pub robot: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub mechanism: MechanismBlock,
    pub synthesis: Option<SynthesisBlock>,
    pub simulation: Option<SimulationBlock>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    PrismaticExtension,
    VirtualInstrument,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismBlock {
    pub kind: Kind,
    pub rcm: [f64; 3],
    /// One-based joint numbers of the two joint-space springs.
    #[serde(default = "default_j2")]
    pub j2: usize,
    #[serde(default = "default_j4")]
    pub j4: usize,
    #[serde(default = "default_rest_j2")]
    pub rest_j2: f64,
    #[serde(default = "default_rest_j4")]
    pub rest_j4: f64,
    /// Prismatic extension inertance (kg).
    pub inertance: Option<f64>,
    /// Virtual instrument mass (kg) and principal inertia (kg·m²).
    pub mass: Option<f64>,
    pub inertia: Option<[f64; 3]>,
    pub deadzone: Option<DeadzoneBlock>,
}

fn default_j2() -> usize {
    2
}
fn default_j4() -> usize {
    4
}
fn default_rest_j2() -> f64 {
    std::f64::consts::PI / 6.0
}
fn default_rest_j4() -> f64 {
    -4.0 * std::f64::consts::PI / 6.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeadzoneBlock {
    pub a_x: f64,
    pub a_y: f64,
    #[serde(default = "one")]
    pub damper_scale: f64,
}

fn one() -> f64 {
    1.0
}

/// A weight given as s (→ sI), a list of such scalars, or one full matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Scalar(f64),
    Scalars(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisBlock {
    #[serde(default = "one")]
    pub gamma: f64,
    pub w1: Weight,
    #[serde(default = "zero_weight")]
    pub w2: Weight,
    #[serde(default = "default_channels")]
    pub channels: Vec<String>,
    pub grid_corner_a: [f64; 3],
    pub grid_corner_b: [f64; 3],
    #[serde(default = "default_grid")]
    pub grid: [usize; 2],
    /// Robot joint angles used to start the equilibrium solves.
    pub initial_guess: Vec<f64>,
    pub k_max: Option<f64>,
    pub epsilons: Option<Vec<f64>>,
}

fn zero_weight() -> Weight {
    Weight::Scalar(0.0)
}
fn default_channels() -> Vec<String> {
    vec!["tip".into(), "base".into()]
}
fn default_grid() -> [usize; 2] {
    [3, 3]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    #[serde(default = "default_reference")]
    pub reference: String,
    /// Hold point for `reference = "hold"` (defaults to the eight-curve start).
    pub hold: Option<[f64; 3]>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_integrator")]
    pub integrator: String,
    #[serde(default = "default_decimation")]
    pub decimation: usize,
    /// Robot joint angles used to start the equilibrium solve at r(0).
    pub initial_guess: Vec<f64>,
    /// Added to the equilibrium joint velocities at t = 0.
    pub initial_velocity: Option<Vec<f64>>,
    pub pulse: Option<PulseBlock>,
}

fn default_reference() -> String {
    "eight_curve".into()
}
fn default_dt() -> f64 {
    1e-3
}
fn default_duration() -> f64 {
    20.0
}
fn default_integrator() -> String {
    "rk4".into()
}
fn default_decimation() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseBlock {
    #[serde(default = "default_port")]
    pub port: String,
    pub force: [f64; 3],
    pub start: f64,
    pub width: f64,
    #[serde(default)]
    pub period: f64,
}

fn default_port() -> String {
    "tip".into()
}

/// Synthesis inputs after validation.
#[derive(Debug, Clone)]
pub struct SynthesisSetup {
    pub gamma: f64,
    /// (label for file names, W1) for each weight to synthesise.
    pub w1: Vec<(String, DMatrix<f64>)>,
    pub w2: DMatrix<f64>,
    pub channels: Vec<Channel>,
    pub targets: Vec<Vector3<f64>>,
    pub initial_guess: DVector<f64>,
    pub k_max: Option<f64>,
    pub epsilons: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub reference: Reference,
    pub config: SimConfig,
    pub initial_guess: DVector<f64>,
    pub initial_velocity: Option<DVector<f64>>,
    pub pulse: Option<(Channel, PulseTrain)>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn fmt_number(v: f64) -> String {
    let s = v.to_string();
    s.replace('.', "p")
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let mut s: Scenario = toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        s.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        s.check()?;
        Ok(s)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn robot_path(&self) -> PathBuf {
        self.resolve(&self.robot)
    }

    pub fn out_dir(&self) -> PathBuf {
        match &self.out_dir {
            Some(d) => self.resolve(d),
            None => self.base_dir.join("out"),
        }
    }

    /// Consistency checks that need no computation.
    fn check(&self) -> Result<(), CliError> {
        if !self.robot_path().is_file() {
            return Err(invalid(format!("robot file {} does not exist", self.robot_path().display())));
        }
        let m = &self.mechanism;
        match m.kind {
            Kind::PrismaticExtension if m.inertance.is_none() => {
                return Err(invalid("prismatic_extension needs `inertance`"));
            }
            Kind::VirtualInstrument if m.mass.is_none() || m.inertia.is_none() => {
                return Err(invalid("virtual_instrument needs `mass` and `inertia`"));
            }
            _ => {}
        }
        if m.deadzone.is_some() && m.kind != Kind::PrismaticExtension {
            return Err(invalid("deadzone relaxation is defined for the prismatic extension only"));
        }
        if m.j2 == 0 || m.j4 == 0 {
            return Err(invalid("joint numbers j2/j4 are one-based"));
        }
        Ok(())
    }

    pub fn load_robot(&self) -> Result<KinematicTree, CliError> {
        let path = self.robot_path();
        let text = std::fs::read_to_string(&path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        parse_urdf(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    /// The mechanism with all gains zero (deadzone not applied).
    pub fn build_mechanism(&self, robot: &KinematicTree) -> Result<MechanismSpec, CliError> {
        let m = &self.mechanism;
        let task = RcmTask {
            rcm: Vector3::from(m.rcm),
            j2: m.j2 - 1,
            rest_j2: m.rest_j2,
            j4: m.j4 - 1,
            rest_j4: m.rest_j4,
        };
        let spec = match m.kind {
            Kind::PrismaticExtension => build_prismatic_extension(robot, task, m.inertance.unwrap_or_default()),
            Kind::VirtualInstrument => build_virtual_instrument(
                robot,
                task,
                m.mass.unwrap_or_default(),
                Matrix3::from_diagonal(&Vector3::from(m.inertia.unwrap_or_default())),
            ),
        };
        spec.map_err(|e| invalid(format!("mechanism: {e}")))
    }

    /// Apply the deadzone relaxation, if configured, to a spec that already has gains.
    pub fn relax(&self, spec: &MechanismSpec) -> Result<MechanismSpec, CliError> {
        match &self.mechanism.deadzone {
            None => Ok(spec.clone()),
            Some(d) => relax_rcm_rectangular(spec, d.a_x, d.a_y, d.damper_scale, None).map_err(|e| invalid(format!("deadzone: {e}"))),
        }
    }

    pub fn synthesis(&self, robot_dof: usize) -> Result<SynthesisSetup, CliError> {
        let s = self.synthesis.as_ref().ok_or_else(|| invalid("scenario has no [synthesis] block"))?;
        let channels = s
            .channels
            .iter()
            .map(|c| Channel::parse(c).ok_or_else(|| invalid(format!("unknown channel '{c}' (use tip or base)"))))
            .collect::<Result<Vec<_>, _>>()?;
        if channels.is_empty() {
            return Err(invalid("at least one synthesis channel is required"));
        }
        let d = 3 * channels.len();
        let w1 = match &s.w1 {
            Weight::Scalar(v) => vec![(fmt_number(*v), DMatrix::identity(d, d) * *v)],
            Weight::Scalars(vs) if !vs.is_empty() => vs.iter().map(|v| (fmt_number(*v), DMatrix::identity(d, d) * *v)).collect(),
            Weight::Scalars(_) => return Err(invalid("w1 list is empty")),
            Weight::Matrix(rows) => vec![("matrix".to_string(), matrix(rows, d, "w1")?)],
        };
        let w2 = match &s.w2 {
            Weight::Scalar(v) => DMatrix::identity(d, d) * *v,
            Weight::Matrix(rows) => matrix(rows, d, "w2")?,
            Weight::Scalars(_) => return Err(invalid("w2 must be a scalar or one matrix")),
        };
        if s.initial_guess.len() != robot_dof {
            return Err(invalid(format!(
                "synthesis.initial_guess has {} entries, robot has {robot_dof} joints",
                s.initial_guess.len()
            )));
        }
        let [nx, ny] = s.grid;
        if nx == 0 || ny == 0 {
            return Err(invalid("pose grid must be at least 1×1"));
        }
        Ok(SynthesisSetup {
            gamma: s.gamma,
            w1,
            w2,
            channels,
            targets: trocar_core::synthesis::pose_grid(&Vector3::from(s.grid_corner_a), &Vector3::from(s.grid_corner_b), nx, ny),
            initial_guess: DVector::from_column_slice(&s.initial_guess),
            k_max: s.k_max,
            epsilons: s.epsilons.clone(),
        })
    }

    pub fn simulation(&self, robot_dof: usize) -> Result<SimulationSetup, CliError> {
        let s = self.simulation.as_ref().ok_or_else(|| invalid("scenario has no [simulation] block"))?;
        let hold = s.hold.map(Vector3::from).unwrap_or_else(|| trocar_core::sim::eight_curve(0.0).position);
        let reference = Reference::preset(&s.reference, hold)
            .ok_or_else(|| invalid(format!("unknown reference '{}' (use eight_curve or hold)", s.reference)))?;
        let integrator = Integrator::parse(&s.integrator)
            .ok_or_else(|| invalid(format!("unknown integrator '{}' (use rk4 or semi-implicit-euler)", s.integrator)))?;
        if s.initial_guess.len() != robot_dof {
            return Err(invalid(format!(
                "simulation.initial_guess has {} entries, robot has {robot_dof} joints",
                s.initial_guess.len()
            )));
        }
        let initial_velocity = match &s.initial_velocity {
            Some(v) if v.len() != robot_dof => {
                return Err(invalid(format!("initial_velocity needs {robot_dof} entries")));
            }
            Some(v) => Some(DVector::from_column_slice(v)),
            None => None,
        };
        let pulse = match &s.pulse {
            Some(p) => {
                let port = Channel::parse(&p.port).ok_or_else(|| invalid(format!("unknown pulse port '{}'", p.port)))?;
                Some((
                    port,
                    PulseTrain {
                        force: Vector3::from(p.force),
                        start: p.start,
                        width: p.width,
                        period: p.period,
                    },
                ))
            }
            None => None,
        };
        Ok(SimulationSetup {
            reference,
            config: SimConfig {
                dt: s.dt,
                duration: s.duration,
                integrator,
                decimation: s.decimation,
            },
            initial_guess: DVector::from_column_slice(&s.initial_guess),
            initial_velocity,
            pulse,
        })
    }
}

fn matrix(rows: &[Vec<f64>], d: usize, name: &str) -> Result<DMatrix<f64>, CliError> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(invalid(format!("{name} must be {d}×{d} for the selected channels")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}
