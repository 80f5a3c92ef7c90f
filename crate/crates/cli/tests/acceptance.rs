//! Acceptance criteria 1–8: one PASS/FAIL line each, non-zero exit on any failure.

mod common;

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use trocar_cli::{build_plants, run_simulation, synthesize, Scenario, SimOverrides};
use trocar_core::dynamics::{coriolis_matrix, dynamics_terms, forward_kinematics, mass_matrix, point_position, JointState};
use trocar_core::mechanisms::{build_prismatic_extension, build_virtual_instrument, RcmTask, VIRTUAL_AXIAL};
use trocar_core::opspace::{CoordinateMap, ReferenceSample};
use trocar_core::sim::{axis_rcm_distance, energy_balance_error, metrics, passivity_audit, SimTrace};
use trocar_core::synthesis::{parse_gains, passivity_check, synthesize_gains, verify_hinf, GainsFile, LinearizedPlant, SynthesisProblem};
use trocar_core::urdf::{parse_urdf, INSTRUMENT_BASE, INSTRUMENT_TIP};
use trocar_core::{KinematicTree, SynthesisError};

use common::{path_str, scenario, stderr, trocar};

type Outcome = Result<String, String>;

const SEED: u64 = 20240607;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn franka() -> KinematicTree {
    parse_urdf(&std::fs::read_to_string(common::model("franka_instrument.urdf")).unwrap()).unwrap()
}

fn task() -> RcmTask {
    RcmTask::new(Vector3::new(0.4, 0.0, 0.35))
}

/// Shared synthesis results, computed once.
struct Gains {
    dir: tempfile::TempDir,
    pe: PathBuf,
    vi20: PathBuf,
    vi100: PathBuf,
}

impl Gains {
    fn new() -> Result<Self, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let run = |name: &str| -> Result<(), String> {
            let s = Scenario::load(&scenario(dir.path(), name, &[])).map_err(|e| e.to_string())?;
            synthesize(&s, &dir.path().join("gains").join(name)).map(|_| ()).map_err(|e| format!("{name}: {e}"))
        };
        run("pe_w20")?;
        run("vi_w1_sweep")?;
        let g = dir.path().join("gains");
        Ok(Self {
            pe: g.join("pe_w20/gains.txt"),
            vi20: g.join("vi_w1_sweep/gains_w1_20.txt"),
            vi100: g.join("vi_w1_sweep/gains_w1_100.txt"),
            dir,
        })
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }
}

fn load(path: &Path) -> GainsFile {
    parse_gains(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn simulate(dir: &Path, name: &str, edits: &[(&str, &str)], gains: &Path, dt: Option<f64>) -> Result<SimTrace, String> {
    simulate_with(dir, name, edits, "", gains, dt)
}

/// `extra` is appended to the scenario, i.e. to its final `[simulation]` table.
fn simulate_with(dir: &Path, name: &str, edits: &[(&str, &str)], extra: &str, gains: &Path, dt: Option<f64>) -> Result<SimTrace, String> {
    let path = scenario(dir, name, edits);
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, format!("{text}\n{extra}")).unwrap();
    let s = Scenario::load(&path).map_err(|e| e.to_string())?;
    run_simulation(&s, &load(gains), SimOverrides { dt, duration: None }).map(|r| r.trace).map_err(|e| format!("{name}: {e}"))
}

fn criterion_1() -> Outcome {
    let tree = parse_urdf(&std::fs::read_to_string(common::model("planar_two_link.urdf")).unwrap()).unwrap();
    let (l1, m1, lc1, i1, m2, lc2, i2, g0) = (1.0, 1.0, 0.5, 0.0834, 0.8, 0.4, 0.0667, 9.81);
    let gravity = Vector3::new(0.0, -g0, 0.0);
    let mut rng = rand::rngs::StdRng::seed_from_u64(SEED);
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let q = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
        let qd = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
        let t = dynamics_terms(&tree, &JointState::new(q.clone(), qd.clone()).unwrap(), &gravity).unwrap();
        let (c1, c2, s2, c12) = (q[0].cos(), q[1].cos(), q[1].sin(), (q[0] + q[1]).cos());
        let m11 = i1 + i2 + m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * c2);
        let m12 = i2 + m2 * (lc2 * lc2 + l1 * lc2 * c2);
        let m22 = i2 + m2 * lc2 * lc2;
        let h = m2 * l1 * lc2 * s2;
        let m = DMatrix::from_row_slice(2, 2, &[m11, m12, m12, m22]);
        let c = DMatrix::from_row_slice(2, 2, &[-h * qd[1], -h * (qd[0] + qd[1]), h * qd[0], 0.0]);
        let g = DVector::from_column_slice(&[(m1 * lc1 + m2 * l1) * g0 * c1 + m2 * lc2 * g0 * c12, m2 * lc2 * g0 * c12]);
        worst = worst.max((t.m - m).amax()).max((t.c - c).amax()).max((t.g - g).amax());
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(worst < 1e-9, || format!("max deviation {worst:.3e} ≥ 1e-9"))?;
    ensure(secs < 5.0, || format!("took {secs:.2} s"))?;
    Ok(format!("max |Δ| over M, C, g at 1000 states = {worst:.2e} ({secs:.3} s)"))
}

fn criterion_2() -> Outcome {
    let tree = franka();
    let mut rng = rand::rngs::StdRng::seed_from_u64(SEED);
    let (mut sym, mut skew, mut min_ev, mut jac): (f64, f64, f64, f64) = (0.0, 0.0, f64::INFINITY, 0.0);
    let p = Vector3::new(0.01, 0.02, -0.03);
    let maps = [
        CoordinateMap::world_point_offset(&tree, INSTRUMENT_TIP, p, None, "ee").unwrap(),
        CoordinateMap::joint_offset(&tree, 1, std::f64::consts::FRAC_PI_6, "j2").unwrap(),
        CoordinateMap::frame_relative_displacement(&tree, INSTRUMENT_TIP, p, "panda_link3", -p, INSTRUMENT_BASE, &[0, 1, 2], "rel").unwrap(),
        CoordinateMap::world_point_to_fixed_point(&tree, INSTRUMENT_BASE, p, task().rcm, "rcm").unwrap(),
    ];
    let pe = build_prismatic_extension(&tree, task(), 0.1).unwrap();
    let vi = build_virtual_instrument(&tree, task(), 0.1, Matrix3::identity() * 0.01).unwrap();
    let h = 1e-6;
    for _ in 0..100 {
        let q = DVector::from_fn(7, |_, _| rng.random_range(-2.5..2.5));
        let qd = DVector::from_fn(7, |_, _| rng.random_range(-2.0..2.0));
        let m = mass_matrix(&tree, &q).unwrap();
        sym = sym.max((&m - m.transpose()).amax());
        min_ev = min_ev.min(m.symmetric_eigenvalues().min());
        let at = |s: f64| mass_matrix(&tree, &(&q + &qd * (s * 1e-3))).unwrap();
        let mdot = (at(-2.0) - at(-1.0) * 8.0 + at(1.0) * 8.0 - at(2.0)) / 12e-3;
        let n = mdot - coriolis_matrix(&tree, &q, &qd).unwrap() * 2.0;
        skew = skew.max((&n + n.transpose()).amax());

        let r = ReferenceSample {
            position: Vector3::new(rng.random_range(-1.0..1.0), 0.1, 0.2),
            velocity: Vector3::new(0.3, -0.2, 0.1),
        };
        let mut check = |map: &CoordinateMap, tr: &KinematicTree, q: &DVector<f64>, qd: &DVector<f64>| {
            let s = map.evaluate(tr, q, qd, &r).unwrap();
            let at = |e: f64| {
                let rs = ReferenceSample { position: r.position + r.velocity * e, velocity: r.velocity };
                map.value(tr, &(q + qd * e), &rs).unwrap()
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            jac = jac.max((&s.zdot - &fd).norm() / fd.norm().max(1e-2));
        };
        for map in &maps {
            check(map, &tree, &q, &qd);
        }
        for spec in [&pe, &vi] {
            let n = spec.extended_dof();
            let qe = DVector::from_fn(n, |i, _| if i < 7 { q[i] } else { rng.random_range(-0.5..0.5) });
            let qde = DVector::from_fn(n, |i, _| if i < 7 { qd[i] } else { rng.random_range(-1.0..1.0) });
            check(&spec.coords, &spec.extended, &qe, &qde);
        }
    }
    ensure(sym < 1e-10 && min_ev > 0.0, || format!("M symmetry {sym:.2e}, min eigenvalue {min_ev:.2e}"))?;
    ensure(skew < 1e-8, || format!("Ṁ − 2C skew residual {skew:.2e}"))?;
    ensure(jac < 1e-5, || format!("Jacobian FD relative error {jac:.2e}"))?;
    Ok(format!("symmetry {sym:.1e}, min λ(M) {min_ev:.3e}, skew {skew:.1e}, Jacobian FD {jac:.1e} at 100 states"))
}

fn criterion_3(gains: &Gains) -> Outcome {
    let started = Instant::now();
    let velocity = "initial_velocity = [0.2, -0.1, 0.15, 0.2, -0.2, 0.3, 0.1]\n";
    let pulse = "[simulation.pulse]\nport = \"tip\"\nforce = [1.0, -1.0, 2.0]\nstart = 1.0\nwidth = 0.2\nperiod = 2.0\n";
    let dt = 2.5e-4;
    let mut lines = Vec::new();
    for (name, file) in [("pe_w20", &gains.pe), ("vi_w1_sweep", &gains.vi20)] {
        for (case, extra) in [("a", velocity), ("b", pulse)] {
            let dir = gains.path().join(format!("c3_{name}_{case}"));
            std::fs::create_dir_all(&dir).unwrap();
            let edits = [("reference = \"eight_curve\"", "reference = \"hold\""), ];
            let coarse = simulate_with(&dir, name, &edits, extra, file, Some(dt))?;
            let fine = simulate_with(&dir, name, &edits, extra, file, Some(dt / 2.0))?;
            let (c1, c2) = (energy_balance_error(&coarse) / (dt * dt), energy_balance_error(&fine) / (dt * dt / 4.0));
            let tol = c1 * dt * dt;
            let audit = passivity_audit(&coarse);
            ensure(c2 <= c1 / 4.0, || format!("{name} ({case}): C = {c1:.3e} → {c2:.3e}, not a 4× drop"))?;
            ensure(audit <= tol, || format!("{name} ({case}): passivity residual {audit:.3e} > C·dt² = {tol:.3e}"))?;
            if case == "a" {
                let rise = coarse.samples.windows(2).map(|w| w[1].energy - w[0].energy).fold(f64::NEG_INFINITY, f64::max);
                ensure(rise <= tol, || format!("{name} (a): energy rose by {rise:.3e}"))?;
                let (e0, e1) = (coarse.samples[0].energy, coarse.samples.last().unwrap().energy);
                ensure(e1 < e0, || format!("{name} (a): no dissipation"))?;
            }
            lines.push(format!("{name}({case}) C {c1:.2e}→{c2:.2e} residual {audit:.1e}"));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{} ({secs:.1} s)", lines.join("; ")))
}

fn criterion_4(gains: &Gains) -> Outcome {
    let unit = || LinearizedPlant::new(0, DMatrix::identity(1, 1), DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
    let mut ks = Vec::new();
    for bound in [0.1, 1.0, 10.0] {
        let problem = SynthesisProblem::new(vec![unit()], 1.0, DMatrix::from_element(1, 1, bound), DMatrix::zeros(1, 1));
        let g = synthesize_gains(&problem).map_err(|e| format!("W1/γ = {bound}: {e}"))?;
        ensure(g.k[0] >= bound * 0.95, || format!("W1/γ = {bound}: k = {} below the boundary", g.k[0]))?;
        let capped = |cap: f64| synthesize_gains(&SynthesisProblem { k_max: Some(cap * bound), ..problem.clone() });
        ensure(capped(1.05).is_ok(), || format!("W1/γ = {bound}: infeasible with k ≤ 1.05·W1/γ"))?;
        ensure(matches!(capped(0.95), Err(SynthesisError::Infeasible { .. })), || format!("W1/γ = {bound}: feasible with k ≤ 0.95·W1/γ"))?;
        ks.push(format!("{:.3}", g.k[0]));
    }

    let s = Scenario::load(&scenario(gains.path(), "pe_w20", &[])).map_err(|e| e.to_string())?;
    let robot = s.load_robot().map_err(|e| e.to_string())?;
    let setup = s.synthesis(robot.dof()).map_err(|e| e.to_string())?;
    let file = load(&gains.pe);
    let spec = s.build_mechanism(&robot).map_err(|e| e.to_string())?;
    let plants = build_plants(&spec, &setup.targets, &setup.initial_guess, &setup.channels).map_err(|e| e.to_string())?;
    ensure(plants.len() == 9, || format!("{} poses", plants.len()))?;
    let (k, c) = (file.k(), file.c());
    ensure(passivity_check(&k, &c).passed, || "passivity check failed".into())?;
    let mut worst: f64 = 0.0;
    for p in &plants {
        worst = worst.max(verify_hinf(p, &k, &c, &setup.w1[0].1, &setup.w2).map_err(|e| e.to_string())?.gamma);
    }
    ensure(worst <= 1.0 + 1e-6, || format!("γ_achieved {worst:.6} > 1"))?;
    Ok(format!("1-DOF k = [{}] for W1/γ = [0.1, 1, 10]; 7-DOF max γ_achieved {worst:.4} over 9 poses", ks.join(", ")))
}

fn max_ee(trace: &SimTrace) -> f64 {
    metrics(trace).unwrap().max_ee_err
}

fn criterion_5(gains: &Gains) -> Outcome {
    let started = Instant::now();
    for (name, path, arity) in [("prismatic extension", &gains.pe, 8), ("virtual instrument", &gains.vi20, 10)] {
        let f = load(path);
        ensure(f.rows.len() == arity, || format!("{name}: {} rows", f.rows.len()))?;
        let g: f64 = f.meta_map()["gamma_achieved_max"].parse().unwrap();
        ensure(g <= 1.0 + 1e-6, || format!("{name}: γ_achieved {g}"))?;
    }
    let g100: f64 = load(&gains.vi100).meta_map()["gamma_achieved_max"].parse().unwrap();
    ensure(g100 <= 1.0 + 1e-6, || format!("W1 = 100: γ_achieved {g100}"))?;
    let dir = gains.path().join("c5");
    std::fs::create_dir_all(&dir).unwrap();
    let e20 = max_ee(&simulate(&dir, "vi_w1_sweep", &[], &gains.vi20, None)?);
    let e100 = max_ee(&simulate(&dir, "vi_w1_sweep", &[], &gains.vi100, None)?);
    ensure(e100 < e20, || format!("max ee error W1=100 {e100:.4e} not below W1=20 {e20:.4e}"))?;
    Ok(format!(
        "both feasible at W1=20I; W1=100I γ_achieved {g100:.3}; VI max ee error {:.2} mm → {:.2} mm ({:.0} s)",
        e20 * 1e3,
        e100 * 1e3,
        started.elapsed().as_secs_f64()
    ))
}

fn criterion_6(gains: &Gains) -> Outcome {
    let dir = gains.path().join("c6");
    std::fs::create_dir_all(&dir).unwrap();
    let point = metrics(&simulate(&dir, "pe_w20", &[], &gains.pe, None)?).unwrap();
    let relaxed_trace = simulate(&dir, "pe_deadzone", &[], &gains.pe, None)?;
    let relaxed = metrics(&relaxed_trace).unwrap();
    let bound = 0.015 * 1.2;
    let margin = relaxed.max_rcm_dist / 0.015 - 1.0;
    let detail = format!(
        "max ee error {:.2} mm (point) → {:.2} mm (deadzone); max axis–RCM {:.2} mm (point {:.2} mm), {:+.0}% vs 15 mm",
        point.max_ee_err * 1e3,
        relaxed.max_ee_err * 1e3,
        relaxed.max_rcm_dist * 1e3,
        point.max_rcm_dist * 1e3,
        margin * 100.0
    );
    ensure(relaxed.max_ee_err < point.max_ee_err, || format!("no end-effector improvement: {detail}"))?;
    ensure(relaxed.max_rcm_dist > 0.0, || format!("constraint not relaxed: {detail}"))?;
    ensure(relaxed.max_rcm_dist <= bound, || format!("axis–RCM distance above {:.0} mm: {detail}", bound * 1e3))?;
    ensure(passivity_audit(&relaxed_trace) <= 1e-6, || "passivity residual".into())?;
    Ok(detail)
}

fn criterion_7() -> Outcome {
    let tree = franka();
    let vi = build_virtual_instrument(&tree, task(), 0.1, Matrix3::identity() * 0.01).unwrap();
    let mut rng = rand::rngs::StdRng::seed_from_u64(SEED);
    let line = |a: &Vector3<f64>, b: &Vector3<f64>, p: &Vector3<f64>| {
        let u = (b - a).normalize();
        let d = p - a;
        (d - u * d.dot(&u)).norm()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let qe = DVector::from_fn(10, |i, _| match i {
            0..=6 => rng.random_range(-2.0..2.0),
            7 | 8 => rng.random_range(-1.3..1.3),
            _ => rng.random_range(-0.5..0.5),
        });
        let pose = forward_kinematics(&vi.extended, &qe, VIRTUAL_AXIAL).unwrap();
        let a = pose.translation.vector;
        worst = worst.max(line(&a, &(a + pose.rotation * Vector3::z()), &vi.task.rcm));
    }
    ensure(worst < 1e-12, || format!("virtual axis misses the RCM by {worst:.2e}"))?;

    let mut oracle: f64 = 0.0;
    for _ in 0..20 {
        let q = DVector::from_fn(7, |_, _| rng.random_range(-2.0..2.0));
        let base = point_position(&tree, &q, INSTRUMENT_BASE, &Vector3::zeros()).unwrap();
        let tip = point_position(&tree, &q, INSTRUMENT_TIP, &Vector3::zeros()).unwrap();
        let axis = tip - base;
        let normal = axis.cross(&Vector3::new(rng.random(), rng.random(), rng.random())).normalize();
        let rcm = base + axis * rng.random_range(-1.0..2.0) + normal * rng.random_range(0.01..0.5);
        let n = 100_000;
        let sampled = (0..=n)
            .map(|i| -2.0 + 5.0 * i as f64 / n as f64)
            .map(|s| (base + axis * s - rcm).norm())
            .fold(f64::INFINITY, f64::min);
        oracle = oracle.max((axis_rcm_distance(&tree, &q, &rcm).unwrap() - sampled).abs());
    }
    ensure(oracle < 1e-6, || format!("sampling oracle deviation {oracle:.2e}"))?;
    Ok(format!("virtual axis–RCM {worst:.1e} at 1000 states; sampling oracle deviation {oracle:.1e}"))
}

fn criterion_8(gains: &Gains) -> Outcome {
    let dir = gains.path().join("c8");
    std::fs::create_dir_all(&dir).unwrap();
    let s = scenario(&dir, "vi_w1_sweep", &[("duration = 20.0", "duration = 2.0")]);
    let run = |out: &str| -> Result<Vec<u8>, String> {
        let out = dir.join(out);
        let o = trocar(&["simulate", "--scenario", path_str(&s), "--gains", path_str(&gains.vi20), "--out-dir", path_str(&out)]);
        ensure(o.status.success(), || stderr(&o))?;
        std::fs::read(out.join("trace.csv")).map_err(|e| e.to_string())
    };
    let (a, b) = (run("first")?, run("second")?);
    ensure(a == b, || "trace.csv differs between runs".into())?;
    Ok(format!("two runs, {} identical bytes", a.len()))
}

fn main() {
    let started = Instant::now();
    let gains = Gains::new();
    let shared = |f: fn(&Gains) -> Outcome| -> Box<dyn Fn() -> Outcome + '_> {
        let gains = &gains;
        Box::new(move || match gains {
            Ok(g) => f(g),
            Err(e) => Err(format!("synthesis failed: {e}")),
        })
    };
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("dynamics oracle", Box::new(criterion_1)),
        ("structural invariants", Box::new(criterion_2)),
        ("passivity", shared(criterion_3)),
        ("synthesis correctness", shared(criterion_4)),
        ("paper protocol", shared(criterion_5)),
        ("deadzone relaxation", shared(criterion_6)),
        ("geometry", Box::new(criterion_7)),
        ("determinism", shared(criterion_8)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({name}, {secs:.1} s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {} ({name}, {secs:.1} s): {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed in {:.0} s", criteria.len() - failed, criteria.len(), started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
