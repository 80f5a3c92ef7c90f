use nalgebra::{DVector, Isometry3, Vector3};
use trocar_core::mechanisms::*;
use trocar_core::opspace::CoordinateMap;
use trocar_core::sim::*;
use trocar_core::synthesis::{find_equilibrium_pose, Channel};
use trocar_core::urdf::{attach_instrument, parse_urdf, INSTRUMENT_TIP};

const MASS: f64 = 2.0;
const STIFFNESS: f64 = 50.0;

/// A point mass on a prismatic x joint tied to the origin by a spring:
/// m ẍ + k x = F, a linear oscillator with a closed-form solution.
fn oscillator(damping: f64) -> MechanismSpec {
    let urdf = format!(
        r#"<robot name="cart"><link name="world"/>
        <link name="cart"><inertial><mass value="{MASS}"/><inertia ixx="0.01" iyy="0.01" izz="0.01"/></inertial></link>
        <joint name="slide" type="prismatic"><parent link="world"/><child link="cart"/><axis xyz="1 0 0"/></joint></robot>"#
    );
    let tree = parse_urdf(&urdf).unwrap();
    let robot = attach_instrument(tree, "cart", Isometry3::identity(), 0.1, 0.0).unwrap();
    let coords = CoordinateMap::world_point_offset(&robot, INSTRUMENT_TIP, Vector3::new(0.0, 0.0, -0.1), Some(Vector3::zeros()), "ee").unwrap();
    MechanismSpec {
        kind: MechanismKind::PrismaticExtension,
        task: RcmTask::new(Vector3::new(0.0, 0.0, 1.0)),
        instrument: InstrumentGeometry { length: 0.1 },
        extended: robot.clone(),
        extension: DynamicExtension { robot_dof: 1, joint_names: vec![], inertia: ExtensionInertia::Inerters(vec![]) },
        robot,
        coords,
        springs: vec![SpringLaw::Linear { k: STIFFNESS }, SpringLaw::Linear { k: 0.0 }, SpringLaw::Linear { k: 0.0 }],
        dampers: vec![DamperLaw::Linear { c: damping }, DamperLaw::Linear { c: 0.0 }, DamperLaw::Linear { c: 0.0 }],
        gravity: Vector3::zeros(),
        gravity_compensation: false,
    }
}

fn displaced(x0: f64) -> InitialState {
    InitialState {
        q: DVector::from_element(1, x0),
        qdot: DVector::zeros(1),
        ext: ExtensionState::at_rest(DVector::zeros(0)),
    }
}

fn config(dt: f64, duration: f64, integrator: Integrator) -> SimConfig {
    SimConfig { dt, duration, integrator, decimation: 1 }
}

/// Final-position error of the oscillator under a constant force switched on at t = 0.
fn forced_error(dt: f64, integrator: Integrator) -> f64 {
    let spec = oscillator(0.0);
    let f = 3.0;
    let force = move |_t: f64| Vector3::new(f, 0.0, 0.0);
    let ext = ExternalForce { port: Channel::InstrumentTip, force: &force };
    let x0 = 0.2;
    let t_end = 2.0;
    let trace = simulate(&spec, &Reference::Hold(Vector3::zeros()), &config(dt, t_end, integrator), &displaced(x0), Some(&ext)).unwrap();
    let w = (STIFFNESS / MASS).sqrt();
    let exact = f / STIFFNESS + (x0 - f / STIFFNESS) * (w * t_end).cos();
    (trace.samples.last().unwrap().qe[0] - exact).abs()
}

#[test]
fn rk4_is_fourth_order() {
    let (a, b) = (forced_error(1e-2, Integrator::Rk4), forced_error(5e-3, Integrator::Rk4));
    let order = (a / b).log2();
    assert!((order - 4.0).abs() < 0.2, "order {order} ({a:e} → {b:e})");
}

#[test]
fn semi_implicit_euler_is_first_order() {
    let (a, b) = (forced_error(1e-3, Integrator::SemiImplicitEuler), forced_error(5e-4, Integrator::SemiImplicitEuler));
    let order = (a / b).log2();
    assert!((order - 1.0).abs() < 0.2, "order {order} ({a:e} → {b:e})");
}

#[test]
fn undamped_energy_error_shrinks_with_dt_to_the_fourth() {
    let spec = oscillator(0.0);
    let run = |dt| {
        let trace = simulate(&spec, &Reference::Hold(Vector3::zeros()), &config(dt, 5.0, Integrator::Rk4), &displaced(0.3), None).unwrap();
        assert_eq!(energy_balance_error(&trace), passivity_audit(&trace).abs().max(energy_balance_error(&trace)));
        energy_balance_error(&trace)
    };
    let (a, b) = (run(2e-2), run(1e-2));
    assert!(a / b > 14.0, "{a:e} / {b:e}");
    // E0 = ½ k x0²
    let trace = simulate(&spec, &Reference::Hold(Vector3::zeros()), &config(1e-2, 0.1, Integrator::Rk4), &displaced(0.3), None).unwrap();
    assert!((trace.samples[0].energy - 0.5 * STIFFNESS * 0.09).abs() < 1e-12);
}

#[test]
fn damped_oscillator_loses_energy_monotonically() {
    let spec = oscillator(4.0);
    let trace = simulate(&spec, &Reference::Hold(Vector3::zeros()), &config(1e-3, 3.0, Integrator::Rk4), &displaced(0.3), None).unwrap();
    assert!(trace.samples.windows(2).all(|w| w[1].energy <= w[0].energy + 1e-12));
    assert!(passivity_audit(&trace) <= 1e-10);
    assert!(energy_balance_error(&trace) < 1e-9);
}

#[test]
fn pulse_train_is_held_over_each_step() {
    let p = PulseTrain { force: Vector3::new(0.0, 0.0, -1.0), start: 0.5, width: 0.1, period: 1.0 };
    assert_eq!(p.at(0.49), Vector3::zeros());
    assert_eq!(p.at(0.5), p.force);
    assert_eq!(p.at(0.61), Vector3::zeros());
    assert_eq!(p.at(1.55), p.force);
    let single = PulseTrain { period: 0.0, ..p };
    assert_eq!(single.at(1.55), Vector3::zeros());

    // a force switched on mid-step only acts from the next step
    let spec = oscillator(0.0);
    let late = |t: f64| if t >= 0.0105 { Vector3::new(1.0, 0.0, 0.0) } else { Vector3::zeros() };
    let grid = |t: f64| if t >= 0.02 - 1e-12 { Vector3::new(1.0, 0.0, 0.0) } else { Vector3::zeros() };
    let run = |f: &dyn Fn(f64) -> Vector3<f64>| {
        simulate(&spec, &Reference::Hold(Vector3::zeros()), &config(1e-2, 0.1, Integrator::Rk4), &displaced(0.0), Some(&ExternalForce { port: Channel::InstrumentTip, force: f }))
            .unwrap()
    };
    assert_eq!(run(&late).samples, run(&grid).samples);
}

#[test]
fn rejects_bad_configuration_and_reports_blowup() {
    let spec = oscillator(0.0);
    let reference = Reference::Hold(Vector3::zeros());
    for bad in [config(0.0, 1.0, Integrator::Rk4), config(1e-2, 0.0, Integrator::Rk4), SimConfig { decimation: 0, ..config(1e-2, 1.0, Integrator::Rk4) }] {
        assert!(matches!(simulate(&spec, &reference, &bad, &displaced(0.1), None), Err(trocar_core::SimError::InvalidConfig(_))));
    }
    // ωdt far beyond the RK4 stability limit
    let stiff = MechanismSpec { springs: vec![SpringLaw::Linear { k: 1e8 }, SpringLaw::Linear { k: 0.0 }, SpringLaw::Linear { k: 0.0 }], ..spec };
    assert!(matches!(simulate(&stiff, &reference, &config(1e-2, 5.0, Integrator::Rk4), &displaced(0.1), None), Err(trocar_core::SimError::IntegratorBlowup { .. })));
}

fn franka_spec() -> (MechanismSpec, DVector<f64>) {
    let tree = parse_urdf(include_str!("../../../models/franka_instrument.urdf")).unwrap();
    let spec = build_prismatic_extension(&tree, RcmTask::new(Vector3::new(0.4, 0.0, 0.35)), 0.1).unwrap();
    let k = DVector::from_column_slice(&[150.0, 150.0, 150.0, 1.0, 1.0, 300.0, 300.0, 100.0]);
    let c = DVector::from_column_slice(&[20.0, 20.0, 20.0, 1.0, 1.0, 30.0, 30.0, 10.0]);
    let spec = spec.with_gains(&k, &c).unwrap();
    let pi = std::f64::consts::PI;
    let guess = DVector::from_column_slice(&[1.5359, pi / 6.0, -2.2274, -2.0 * pi / 3.0, 1.5428, 0.6716, 0.4098]);
    let target = trocar_core::sim::eight_curve(0.0).position;
    let qe = find_equilibrium_pose(&spec, &target, &guess).unwrap();
    (spec, qe)
}

#[test]
fn equilibrium_hold_stays_put() {
    let (spec, qe) = franka_spec();
    let target = eight_curve(0.0).position;
    let trace = simulate(&spec, &Reference::Hold(target), &config(1e-3, 0.5, Integrator::Rk4), &InitialState::at_rest(&spec, &qe), None).unwrap();
    assert!(trace.samples.iter().all(|s| s.ee_err <= 1e-9));
    assert!(trace.samples.iter().all(|s| s.rcm_dist <= 1e-9));
    assert!(passivity_audit(&trace) < 1e-15);
}

#[test]
fn identical_runs_are_identical() {
    let (spec, qe) = franka_spec();
    let pulse = PulseTrain { force: Vector3::new(1.0, -2.0, 0.5), start: 0.05, width: 0.05, period: 0.2 };
    let f = move |t: f64| pulse.at(t);
    let ext = ExternalForce { port: Channel::InstrumentTip, force: &f };
    let cfg = SimConfig { decimation: 5, ..config(1e-3, 0.5, Integrator::Rk4) };
    let run = || simulate(&spec, &Reference::EightCurve, &cfg, &InitialState::at_rest(&spec, &qe), Some(&ext)).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert_eq!(a.len(), 101);
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    write_csv(&a, &mut ca).unwrap();
    write_csv(&b, &mut cb).unwrap();
    assert_eq!(ca, cb);
    assert!(passivity_audit(&a) < 1e-8);
}
