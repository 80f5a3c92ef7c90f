//! Batch front end: model inspection, gain synthesis, simulation and verification.
//!
//! Every command returns its report as text; `main` prints it and maps
//! [`CliError`] to the exit-code contract.

pub mod scenario;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use trocar_core::mechanisms::MechanismSpec;
use trocar_core::opspace::ReferenceSample;
use trocar_core::sim::{self, ExternalForce, InitialState, SimTrace};
use trocar_core::synthesis::plant::COND_WARN;
use trocar_core::synthesis::{
    find_equilibrium_pose, linearize, parse_gains, passivity_check, solve_from, synthesize_gains, verify_hinf, write_gains,
    Channel, GainSet, GainsFile, LinearizedPlant, SynthesisProblem,
};
use trocar_core::{KinematicTree, SimError, SynthesisError};

pub use scenario::Scenario;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;
pub const EXIT_VERIFY_FAILED: i32 = 4;

pub const DEFAULT_SEED: u64 = 20240607;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Infeasible(String),
    Blowup(String),
    /// The report is still printed; only the exit status differs.
    VerifyFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Blowup(_) => EXIT_BLOWUP,
            CliError::VerifyFailed(_) => EXIT_VERIFY_FAILED,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Infeasible(m) => write!(f, "synthesis infeasible: {m}"),
            CliError::Blowup(m) => write!(f, "simulation failed: {m}"),
            CliError::VerifyFailed(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn vec3(v: &Vector3<f64>) -> String {
    format!("({:.4}, {:.4}, {:.4})", v.x, v.y, v.z)
}

pub fn model_info(robot_path: &Path) -> Result<String, CliError> {
    let text = std::fs::read_to_string(robot_path).map_err(|e| io_err(robot_path, e))?;
    let tree = trocar_core::urdf::parse_urdf(&text).map_err(|e| CliError::Input(format!("{}: {e}", robot_path.display())))?;
    let mut out = String::new();
    let _ = writeln!(out, "DOF: {}", tree.dof());
    let _ = writeln!(out, "root: {}", tree.root());
    let _ = writeln!(out, "moving mass: {:.6} kg", tree.moving_mass());
    let _ = writeln!(out, "joints:");
    for j in tree.joints() {
        let limits = j.limits.map_or("unlimited".to_string(), |(lo, hi)| format!("[{lo:.4}, {hi:.4}]"));
        let _ = writeln!(out, "  {} {:?} carries {} ({:.6} kg) limits {limits}", j.name, j.kind, j.child_link, j.inertia.mass);
    }
    let frames: Vec<&str> = tree.frames().keys().map(String::as_str).collect();
    let _ = writeln!(out, "frames: {}", frames.join(", "));
    let m = trocar_core::dynamics::mass_matrix(&tree, &DVector::zeros(tree.dof())).map_err(|e| CliError::Input(e.to_string()))?;
    if tree.dof() > 0 {
        let ev = m.symmetric_eigenvalues();
        let _ = writeln!(out, "M(q0) eigenvalues: [{:.6e}, {:.6e}]", ev.min(), ev.max());
    }
    Ok(out)
}

/// Equilibria and linearised plants over the scenario's pose grid. Poses are
/// solved in grid order, each starting from the previous solution.
pub fn build_plants(
    spec: &MechanismSpec,
    targets: &[Vector3<f64>],
    guess: &DVector<f64>,
    channels: &[Channel],
) -> Result<Vec<LinearizedPlant>, CliError> {
    let mut plants = Vec::with_capacity(targets.len());
    let mut previous: Option<DVector<f64>> = None;
    for (i, target) in targets.iter().enumerate() {
        let solved = match &previous {
            Some(qe) => solve_from(spec, target, qe.clone()).or_else(|_| find_equilibrium_pose(spec, target, guess)),
            None => find_equilibrium_pose(spec, target, guess),
        };
        let qe = solved.map_err(|e| CliError::Infeasible(format!("pose {i} at {}: no equilibrium ({e})", vec3(target))))?;
        let plant = linearize(spec, &qe, target, channels, i).map_err(|e| match e {
            SynthesisError::SingularJacobian { .. } => CliError::Infeasible(format!("pose {i} at {}: {e}", vec3(target))),
            other => CliError::Input(format!("pose {i}: {other}")),
        })?;
        plants.push(plant);
        previous = Some(qe);
    }
    Ok(plants)
}

pub struct SynthesisRun {
    pub label: String,
    pub path: PathBuf,
    pub gains: GainSet,
    pub file: GainsFile,
}

pub fn gains_file_name(label: &str, single: bool) -> String {
    if single {
        "gains.txt".into()
    } else {
        format!("gains_w1_{label}.txt")
    }
}

/// Synthesise one gain set per W1 entry and write the gains files.
pub fn synthesize(scenario: &Scenario, out_dir: &Path) -> Result<(String, Vec<SynthesisRun>), CliError> {
    let robot = scenario.load_robot()?;
    let spec = scenario.build_mechanism(&robot)?;
    let setup = scenario.synthesis(robot.dof())?;
    let d = 3 * setup.channels.len();
    let mut report = String::new();
    let _ = writeln!(report, "mechanism: {} (arity {})", spec.kind.as_str(), spec.arity());
    if scenario.mechanism.deadzone.is_some() {
        let _ = writeln!(report, "note: deadzone springs are not synthesised; linear gains are designed and relaxed at simulation time");
    }
    let plants = build_plants(&spec, &setup.targets, &setup.initial_guess, &setup.channels)?;
    for p in &plants {
        if p.cond > COND_WARN {
            let _ = writeln!(report, "warning: pose {} is near-singular (cond {:.3e})", p.pose, p.cond);
        }
    }
    let single = setup.w1.len() == 1;
    let mut runs = Vec::new();
    for (label, w1) in &setup.w1 {
        let mut problem = SynthesisProblem::new(plants.clone(), setup.gamma, w1.clone(), setup.w2.clone());
        problem.k_max = setup.k_max;
        if let Some(e) = &setup.epsilons {
            problem.epsilons = e.clone();
        }
        if w1.nrows() != d {
            return Err(CliError::Input("W1 dimension does not match channels".into()));
        }
        let gains = synthesize_gains(&problem).map_err(|e| match e {
            SynthesisError::Infeasible { pose, slack } => CliError::Infeasible(format!(
                "W1 {label}: LMI infeasible, binding pose {pose} at {} (slack {slack:.3e})",
                vec3(&setup.targets[pose.min(setup.targets.len() - 1)])
            )),
            SynthesisError::SingularJacobian { pose, cond } => {
                CliError::Infeasible(format!("pose {pose}: coordinate Jacobian singular (cond {cond:.3e})"))
            }
            other => CliError::Infeasible(format!("W1 {label}: {other}")),
        })?;
        let cert = gains.certificate.as_ref().expect("synthesis returns a certificate");
        let mut file = GainsFile::from_vectors(spec.labels(), &gains.k, &gains.c)
            .with_meta("mechanism", spec.kind.as_str())
            .with_meta("gamma", setup.gamma)
            .with_meta("w1", label)
            .with_meta("epsilon", cert.epsilon)
            .with_meta("objective", cert.objective)
            .with_meta("gamma_achieved_max", cert.gamma_achieved.iter().copied().fold(0.0, f64::max));
        if let Some(name) = &scenario.name {
            file = file.with_meta("scenario", name);
        }
        let path = out_dir.join(gains_file_name(label, single));
        write_file(&path, write_gains(&file).as_bytes())?;

        let _ = writeln!(report, "W1 {label}: feasible and verified (epsilon {:.4e}, objective {:.6e})", cert.epsilon, cert.objective);
        for (i, p) in plants.iter().enumerate() {
            let _ = writeln!(
                report,
                "  pose {i} target {} cond {:.3} gamma_achieved {:.6} (sweep {:.6})",
                vec3(&setup.targets[i]),
                p.cond,
                cert.gamma_achieved[i],
                cert.sweep[i]
            );
        }
        let _ = writeln!(report, "  |k| = {:.6e}  |c| = {:.6e}", gains.k.norm(), gains.c.norm());
        for (l, (k, c)) in spec.labels().iter().zip(gains.k.iter().zip(gains.c.iter())) {
            let _ = writeln!(report, "  {l:<8} k {k:>14.6e}  c {c:>14.6e}");
        }
        let _ = writeln!(report, "  written: {}", path.display());
        runs.push(SynthesisRun {
            label: label.clone(),
            path,
            gains,
            file,
        });
    }
    Ok((report, runs))
}

pub fn load_gains(path: &Path) -> Result<GainsFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_gains(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOverrides {
    pub dt: Option<f64>,
    pub duration: Option<f64>,
}

pub struct SimulationRun {
    pub trace: SimTrace,
    pub summary: Vec<(String, String)>,
    pub spec: MechanismSpec,
}

/// The mechanism of `scenario` with the gains of `file` (and the deadzone, if any).
pub fn configured_mechanism(scenario: &Scenario, robot: &KinematicTree, file: &GainsFile) -> Result<MechanismSpec, CliError> {
    let spec = scenario.build_mechanism(robot)?;
    let spec = spec.with_labeled_gains(&file.rows).map_err(|e| CliError::Input(format!("gains: {e}")))?;
    scenario.relax(&spec)
}

pub fn run_simulation(scenario: &Scenario, file: &GainsFile, overrides: SimOverrides) -> Result<SimulationRun, CliError> {
    let robot = scenario.load_robot()?;
    let spec = configured_mechanism(scenario, &robot, file)?;
    let mut setup = scenario.simulation(robot.dof())?;
    if let Some(dt) = overrides.dt {
        setup.config.dt = dt;
    }
    if let Some(d) = overrides.duration {
        setup.config.duration = d;
    }
    let start = setup.reference.sample(0.0).position;
    let qe = find_equilibrium_pose(&spec, &start, &setup.initial_guess)
        .map_err(|e| CliError::Input(format!("no equilibrium at the reference start {}: {e}", vec3(&start))))?;
    let mut init = InitialState::at_rest(&spec, &qe);
    if let Some(v) = &setup.initial_velocity {
        init.qdot += v;
    }
    let pulse = setup.pulse;
    let force = move |t: f64| pulse.map_or_else(Vector3::zeros, |(_, p)| p.at(t));
    let external = pulse.map(|(port, _)| ExternalForce { port, force: &force });
    let trace = sim::simulate(&spec, &setup.reference, &setup.config, &init, external.as_ref()).map_err(|e| match e {
        SimError::IntegratorBlowup { .. } => CliError::Blowup(e.to_string()),
        other => CliError::Input(other.to_string()),
    })?;
    let metrics = sim::metrics(&trace).map_err(|e| CliError::Input(e.to_string()))?;
    let mut summary: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| summary.push((k.to_string(), v));
    if let Some(n) = &scenario.name {
        put("scenario", n.clone());
    }
    put("mechanism", spec.kind.as_str().into());
    put("deadzone", scenario.mechanism.deadzone.is_some().to_string());
    put("dt", setup.config.dt.to_string());
    put("duration", setup.config.duration.to_string());
    put("samples", trace.len().to_string());
    for (k, v) in metrics.entries() {
        put(k, v.to_string());
    }
    put("passivity_residual", sim::passivity_audit(&trace).to_string());
    put("energy_balance_error", sim::energy_balance_error(&trace).to_string());
    put("final_energy", trace.samples.last().map_or(0.0, |s| s.energy).to_string());
    let violations = sim::limit_violations(&robot, &trace);
    put("limit_violations", violations.len().to_string());
    for (name, excess) in violations {
        put(&format!("limit_excess_{name}"), excess.to_string());
    }
    Ok(SimulationRun { trace, summary, spec })
}

pub fn format_summary(summary: &[(String, String)]) -> String {
    summary.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

fn gnuplot_script(trace: &SimTrace) -> String {
    let Some(first) = trace.samples.first() else { return String::new() };
    let ne = first.qe.len();
    let n = trace.robot_dof;
    // column numbers are 1-based: t, q (ne), qd (ne), u (n), u_nog (n), ee_err, rcm_dist, ...
    let ee = 2 + 2 * ne + 2 * n;
    let u_nog = 2 + 2 * ne + n;
    let mut s = String::from("set datafile separator ','\nset key autotitle columnhead\nset xlabel 't (s)'\n");
    s.push_str("set multiplot layout 2,1\n");
    let _ = writeln!(s, "plot 'trace.csv' using 1:{ee} with lines title 'ee error (m)', '' using 1:{} with lines title 'axis-RCM distance (m)'", ee + 1);
    let cols: Vec<String> = (0..n)
        .map(|i| format!("'' using 1:{} with lines title 'u{}-g'", u_nog + i, i + 1))
        .collect();
    let _ = writeln!(s, "plot {}", cols.join(", ").replacen("''", "'trace.csv'", 1));
    s.push_str("unset multiplot\n");
    s
}

/// Run the scenario's simulation and write `trace.csv`, `summary.txt` and `plot.gp`.
pub fn simulate(scenario: &Scenario, gains_path: &Path, out_dir: &Path, overrides: SimOverrides) -> Result<String, CliError> {
    let file = load_gains(gains_path)?;
    let run = run_simulation(scenario, &file, overrides)?;
    let mut csv = Vec::new();
    sim::write_csv(&run.trace, &mut csv).map_err(|e| CliError::Input(e.to_string()))?;
    write_file(&out_dir.join("trace.csv"), &csv)?;
    let summary = format_summary(&run.summary);
    write_file(&out_dir.join("summary.txt"), summary.as_bytes())?;
    write_file(&out_dir.join("plot.gp"), gnuplot_script(&run.trace).as_bytes())?;
    Ok(summary)
}

/// Central-difference check of the coordinate Jacobian and of ∂z/∂t at one state.
/// Returns the largest relative error (normalised per entry by max(|J|, 1)).
pub fn jacobian_fd_error(spec: &MechanismSpec, qe: &DVector<f64>, reference: &sim::Reference, t: f64) -> Result<f64, CliError> {
    let h = 1e-6;
    let r = reference.sample(t);
    let eval = |q: &DVector<f64>, r: &ReferenceSample| spec.coordinates(q, r).map_err(|e| CliError::Input(e.to_string()));
    let base = eval(qe, &r)?;
    let scale = base.jac.amax().max(1.0);
    let mut worst: f64 = 0.0;
    for j in 0..qe.len() {
        let mut qp = qe.clone();
        let mut qm = qe.clone();
        qp[j] += h;
        qm[j] -= h;
        let col = (eval(&qp, &r)?.z - eval(&qm, &r)?.z) / (2.0 * h);
        worst = worst.max((col - base.jac.column(j)).amax() / scale);
    }
    let dt = (eval(qe, &reference.sample(t + h))?.z - eval(qe, &reference.sample(t - h))?.z) / (2.0 * h);
    worst = worst.max((dt - &base.dzdt).amax() / base.dzdt.amax().max(1.0));
    Ok(worst)
}

pub struct VerifyReport {
    pub text: String,
    pub passed: bool,
}

/// Passivity of the gains, H∞ re-verification at every synthesis pose and
/// finite-difference checks of the coordinate Jacobian at random states.
pub fn verify(scenario: &Scenario, gains_path: &Path, seed: u64) -> Result<VerifyReport, CliError> {
    let file = load_gains(gains_path)?;
    let robot = scenario.load_robot()?;
    let spec = scenario.build_mechanism(&robot)?.with_labeled_gains(&file.rows).map_err(|e| CliError::Input(format!("gains: {e}")))?;
    let (k, c) = (file.k(), file.c());
    let mut text = String::new();
    let mut all = true;
    let mut line = |ok: bool, name: &str, detail: String, text: &mut String| {
        all &= ok;
        let _ = writeln!(text, "{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    };

    let pc = passivity_check(&k, &c);
    let labels = spec.labels();
    let detail = if pc.passed {
        format!("all {} springs and dampers non-negative", k.len())
    } else {
        let bad: Vec<String> = pc.negative.iter().map(|(i, w)| format!("{w}[{}]", labels[*i])).collect();
        format!("negative entries {}", bad.join(", "))
    };
    line(pc.passed, "passivity", detail, &mut text);

    if let Ok(setup) = scenario.synthesis(robot.dof()) {
        let meta = file.meta_map();
        let gamma = meta.get("gamma").and_then(|v| v.parse().ok()).unwrap_or(setup.gamma);
        let w1: DMatrix<f64> = match meta.get("w1") {
            Some(l) => setup.w1.iter().find(|(lab, _)| lab == l).map(|x| x.1.clone()),
            None => None,
        }
        .unwrap_or_else(|| setup.w1[0].1.clone());
        let plants = build_plants(&spec, &setup.targets, &setup.initial_guess, &setup.channels)?;
        let mut worst: f64 = 0.0;
        let mut failure = None;
        for p in &plants {
            match verify_hinf(p, &k, &c, &w1, &setup.w2) {
                Ok(r) => worst = worst.max(r.gamma),
                Err(e) => {
                    failure = Some(format!("pose {}: {e}", p.pose));
                    break;
                }
            }
        }
        match failure {
            Some(f) => line(false, "hinf", f, &mut text),
            None => line(
                worst <= gamma * (1.0 + 1e-6),
                "hinf",
                format!("max gamma_achieved {worst:.6} over {} poses (bound {gamma})", plants.len()),
                &mut text,
            ),
        }
    } else {
        let _ = writeln!(text, "SKIP hinf: scenario has no [synthesis] block");
    }

    let sim_setup = scenario.simulation(robot.dof()).ok();
    let (reference, guess) = match (&sim_setup, scenario.synthesis(robot.dof())) {
        (Some(s), _) => (s.reference, s.initial_guess.clone()),
        (None, Ok(s)) => (sim::Reference::EightCurve, s.initial_guess.clone()),
        (None, Err(e)) => return Err(e),
    };
    let start = reference.sample(0.0).position;
    let qe0 = find_equilibrium_pose(&spec, &start, &guess).map_err(|e| CliError::Input(format!("no equilibrium at {}: {e}", vec3(&start))))?;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    const STATES: usize = 20;
    for _ in 0..STATES {
        let qe = qe0.map(|v| v + rng.random_range(-0.2..0.2));
        let t = rng.random_range(0.0..10.0);
        worst = worst.max(jacobian_fd_error(&spec, &qe, &reference, t)?);
    }
    line(worst < 1e-5, "jacobian", format!("max relative FD error {worst:.3e} at {STATES} states (seed {seed})"), &mut text);
    Ok(VerifyReport { text, passed: all })
}
