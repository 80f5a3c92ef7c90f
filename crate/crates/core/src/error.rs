use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("malformed XML at line {line}, column {column}: {message}")]
    MalformedXml {
        line: u32,
        column: u32,
        message: String,
    },
    #[error("line {line}: joint '{name}' has unsupported type '{kind}'")]
    UnsupportedJointType { name: String, kind: String, line: u32 },
    #[error("line {line}: {message}")]
    InvalidValue { line: u32, message: String },
    #[error("link '{0}' is moved by a joint but has no <inertial> block")]
    MissingInertial(String),
    #[error("kinematic graph is not a tree: {0}")]
    CyclicGraph(String),
    #[error("expected exactly one root link, found {0:?}")]
    MultipleRoots(Vec<String>),
    #[error("unknown link '{0}'")]
    UnknownLink(String),
    #[error("unknown frame '{0}'")]
    UnknownFrame(String),
    #[error("name '{0}' is already in use")]
    DuplicateName(String),
    #[error("link '{link}': {reason}")]
    InvalidInertia { link: String, reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MechanismError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("robot model lacks instrument frame '{0}'")]
    MissingInstrumentFrame(String),
    #[error("operation requires a {expected} mechanism")]
    WrongMechanismKind { expected: &'static str },
    #[error("extension inertia is not positive definite")]
    SingularExtensionInertia,
    #[error("instrument axis is aligned with the first virtual revolute axis")]
    GimbalLock,
    #[error("gain labels do not match the coordinate bank: {0}")]
    LabelMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error("target unreachable (residual {residual:.3e})")]
    Unreachable { residual: f64 },
    #[error("equilibrium solve hit the iteration limit (residual {residual:.3e})")]
    IterationLimit { residual: f64 },
    #[error("state is not an equilibrium (residual {residual:.3e})")]
    NotEquilibrium { residual: f64 },
    #[error("pose {pose}: coordinate Jacobian is singular (condition number {cond:.3e})")]
    SingularJacobian { pose: usize, cond: f64 },
    #[error("LMI infeasible; binding pose {pose} (slack {slack:.3e})")]
    Infeasible { pose: usize, slack: f64 },
    #[error("SDP solver failure: {0}")]
    SolverFailure(String),
    #[error("closed loop is not Hurwitz (spectral abscissa {abscissa:.3e})")]
    UnstablePlant { abscissa: f64 },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error("integrator blow-up at t = {t:.6} s")]
    IntegratorBlowup { t: f64 },
    #[error("trace is empty")]
    EmptyTrace,
    #[error("instrument axis is degenerate (base and tip coincide)")]
    DegenerateAxis,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
