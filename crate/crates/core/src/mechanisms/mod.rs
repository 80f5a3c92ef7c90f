//! Virtual mechanisms for the remote-centre-of-motion task.
//!
//! A mechanism owns two trees: the real robot (for M, C, g) and an *extended*
//! tree with the virtual joints appended, over which the coordinate bank is
//! defined. The extended state is q_e = (q, q_c). Virtual joints carry no mass
//! in the extended tree; their inertia M_c(q_c) comes from a separate model, so
//! the extended inertia is block diagonal by construction.

pub mod laws;

use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};

use crate::dynamics::{check_dim, Kinematics, DEFAULT_GRAVITY};
use crate::error::{MechanismError, ModelError};
use crate::model::{BodyInertia, JointKind, KinematicTree};
use crate::opspace::{stack, CoordinateEval, CoordinateMap, ReferenceSample};
use crate::urdf::{INSTRUMENT_BASE, INSTRUMENT_CENTER, INSTRUMENT_TIP};

pub use laws::{DamperLaw, Inerter, SpringLaw};

/// Derived frame at the instrument base whose z axis points from base to tip.
pub const INSTRUMENT_FRAME: &str = "instrument";
pub const VIRTUAL_SLIDER: &str = "virtual_slider";
pub const VIRTUAL_RX: &str = "virtual_rx";
pub const VIRTUAL_RY: &str = "virtual_ry";
pub const VIRTUAL_AXIAL: &str = "virtual_axial";

/// A virtual-instrument orientation closer than this to the first revolute
/// axis is treated as gimbal lock.
const GIMBAL_LIMIT: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MechanismKind {
    PrismaticExtension,
    VirtualInstrument,
}

impl MechanismKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MechanismKind::PrismaticExtension => "prismatic_extension",
            MechanismKind::VirtualInstrument => "virtual_instrument",
        }
    }
}

/// Task data shared by both mechanisms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcmTask {
    pub rcm: Vector3<f64>,
    /// Zero-based index of the joint held by the first joint-space spring (J2).
    pub j2: usize,
    pub rest_j2: f64,
    /// Zero-based index of the joint held by the second joint-space spring (J4).
    pub j4: usize,
    pub rest_j4: f64,
}

impl RcmTask {
    /// The Franka-style defaults: J2 at π/6 and J4 at −4π/6.
    pub fn new(rcm: Vector3<f64>) -> Self {
        use std::f64::consts::PI;
        Self {
            rcm,
            j2: 1,
            rest_j2: PI / 6.0,
            j4: 3,
            rest_j4: -4.0 * PI / 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExtensionInertia {
    /// One inerter across each virtual joint: M_c = diag(m), C_c = 0.
    Inerters(Vec<Inerter>),
    /// A rigid virtual link carried by the virtual joints (world-rooted tree, no gravity).
    Link(KinematicTree),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicExtension {
    /// Number of real robot joints; virtual joints follow in the extended tree.
    pub robot_dof: usize,
    pub joint_names: Vec<String>,
    pub inertia: ExtensionInertia,
}

impl DynamicExtension {
    pub fn dof(&self) -> usize {
        self.joint_names.len()
    }

    pub fn mass_matrix(&self, qc: &DVector<f64>) -> DMatrix<f64> {
        match &self.inertia {
            ExtensionInertia::Inerters(i) => {
                DMatrix::from_diagonal(&DVector::from_iterator(i.len(), i.iter().map(|x| x.inertance)))
            }
            ExtensionInertia::Link(tree) => Kinematics::new(tree, qc).expect("extension dimension").mass_matrix(tree),
        }
    }

    /// Velocity-product term C_c(q_c, q̇_c) q̇_c.
    pub fn bias(&self, qc: &DVector<f64>, qdc: &DVector<f64>) -> DVector<f64> {
        match &self.inertia {
            ExtensionInertia::Inerters(i) => DVector::zeros(i.len()),
            ExtensionInertia::Link(tree) => Kinematics::new(tree, qc).expect("extension dimension").inverse_dynamics(
                tree,
                qdc,
                &DVector::zeros(qc.len()),
                &Vector3::zeros(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionState {
    pub qc: DVector<f64>,
    pub qdc: DVector<f64>,
}

impl ExtensionState {
    pub fn at_rest(qc: DVector<f64>) -> Self {
        let n = qc.len();
        Self { qc, qdc: DVector::zeros(n) }
    }
}

/// Robot-side description of the instrument shaft.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstrumentGeometry {
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismSpec {
    pub kind: MechanismKind,
    pub task: RcmTask,
    pub instrument: InstrumentGeometry,
    pub robot: KinematicTree,
    pub extended: KinematicTree,
    pub extension: DynamicExtension,
    pub coords: CoordinateMap,
    pub springs: Vec<SpringLaw>,
    pub dampers: Vec<DamperLaw>,
    pub gravity: Vector3<f64>,
    pub gravity_compensation: bool,
}

/// Controller signals at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerOutput {
    /// Robot torque including gravity compensation.
    pub u: DVector<f64>,
    /// Robot torque from the mechanism alone.
    pub u_nog: DVector<f64>,
    pub gravity: DVector<f64>,
    pub qddot_c: DVector<f64>,
    pub force: DVector<f64>,
    pub z: DVector<f64>,
    pub zdot: DVector<f64>,
    pub jac: DMatrix<f64>,
    pub dzdt: DVector<f64>,
}

/// Make sure the instrument frames exist and add the derived frames used by
/// the mechanisms. Returns the shaft length.
pub fn prepare_instrument(tree: &mut KinematicTree) -> Result<InstrumentGeometry, MechanismError> {
    let base = tree
        .frame(INSTRUMENT_BASE)
        .map_err(|_| MechanismError::MissingInstrumentFrame(INSTRUMENT_BASE.into()))?;
    let tip = tree
        .frame(INSTRUMENT_TIP)
        .map_err(|_| MechanismError::MissingInstrumentFrame(INSTRUMENT_TIP.into()))?;
    if base.body != tip.body {
        return Err(MechanismError::InvalidParameter(
            "instrument base and tip must be on the same rigid body".into(),
        ));
    }
    let d = base.offset.inverse_transform_point(&Point3::from(tip.offset.translation.vector)).coords;
    let length = d.norm();
    if length < 1e-9 {
        return Err(MechanismError::InvalidParameter("instrument has zero length".into()));
    }
    if !tree.has_frame(INSTRUMENT_FRAME) {
        let rot = UnitQuaternion::rotation_between(&Vector3::z(), &d).unwrap_or_else(|| {
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)
        });
        tree.add_frame(INSTRUMENT_FRAME, INSTRUMENT_BASE, Isometry3::from_parts(Translation3::identity(), rot))?;
    }
    if !tree.has_frame(INSTRUMENT_CENTER) {
        tree.add_frame(INSTRUMENT_CENTER, INSTRUMENT_FRAME, Isometry3::translation(0.0, 0.0, 0.5 * length))?;
    }
    Ok(InstrumentGeometry { length })
}

fn check_task(tree: &KinematicTree, task: &RcmTask) -> Result<(), MechanismError> {
    let n = tree.dof();
    if task.j2 >= n || task.j4 >= n || task.j2 == task.j4 {
        return Err(MechanismError::InvalidParameter(format!(
            "joint-space springs need two distinct joints below {n}"
        )));
    }
    if !task.rcm.iter().all(|v| v.is_finite()) {
        return Err(MechanismError::InvalidParameter("RCM must be finite".into()));
    }
    Ok(())
}

fn robot_rows(extended: &KinematicTree, task: &RcmTask) -> Result<Vec<CoordinateMap>, ModelError> {
    Ok(vec![
        CoordinateMap::world_point_offset(extended, INSTRUMENT_TIP, Vector3::zeros(), None, "ee")?,
        CoordinateMap::joint_offset(extended, task.j2, task.rest_j2, "j2")?,
        CoordinateMap::joint_offset(extended, task.j4, task.rest_j4, "j4")?,
    ])
}

fn zero_laws(arity: usize) -> (Vec<SpringLaw>, Vec<DamperLaw>) {
    (vec![SpringLaw::Linear { k: 0.0 }; arity], vec![DamperLaw::Linear { c: 0.0 }; arity])
}

/// One virtual prismatic joint sliding along the instrument, with an inerter
/// across it. Coordinates: tip − reference, J2, J4, slider − RCM.
/// All springs and dampers start at zero; see [`MechanismSpec::with_gains`].
pub fn build_prismatic_extension(tree: &KinematicTree, task: RcmTask, inertance: f64) -> Result<MechanismSpec, MechanismError> {
    let inerter = Inerter::new(inertance)
        .ok_or_else(|| MechanismError::InvalidParameter(format!("inertance must be positive, got {inertance}")))?;
    let mut robot = tree.clone();
    let instrument = prepare_instrument(&mut robot)?;
    check_task(&robot, &task)?;
    let mut extended = robot.clone();
    extended.push_joint(VIRTUAL_SLIDER, INSTRUMENT_FRAME, Isometry3::identity(), JointKind::Prismatic, Vector3::z_axis())?;
    let mut rows = robot_rows(&extended, &task)?;
    rows.push(CoordinateMap::world_point_to_fixed_point(&extended, VIRTUAL_SLIDER, Vector3::zeros(), task.rcm, "rcm")?);
    let coords = stack(&rows)?;
    let (springs, dampers) = zero_laws(coords.arity());
    Ok(MechanismSpec {
        kind: MechanismKind::PrismaticExtension,
        task,
        instrument,
        extension: DynamicExtension {
            robot_dof: robot.dof(),
            joint_names: vec![VIRTUAL_SLIDER.into()],
            inertia: ExtensionInertia::Inerters(vec![inerter]),
        },
        robot,
        extended,
        coords,
        springs,
        dampers,
        gravity: DEFAULT_GRAVITY,
        gravity_compensation: true,
    })
}

fn virtual_chain(root: &mut KinematicTree, parent: &str, rcm: &Vector3<f64>) -> Result<(), ModelError> {
    // At q_c = 0 the virtual axis points straight down through the RCM.
    let mount = Isometry3::from_parts(
        Translation3::from(*rcm),
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI),
    );
    root.push_joint(VIRTUAL_RX, parent, mount, JointKind::Revolute, Vector3::x_axis())?;
    root.push_joint(VIRTUAL_RY, VIRTUAL_RX, Isometry3::identity(), JointKind::Revolute, Vector3::y_axis())?;
    root.push_joint(VIRTUAL_AXIAL, VIRTUAL_RY, Isometry3::identity(), JointKind::Prismatic, Vector3::z_axis())?;
    Ok(())
}

/// Two revolute joints at the RCM followed by a prismatic joint along a virtual
/// instrument of the same length as the real one. Coordinates: tip − reference,
/// J2, J4, then real-minus-virtual displacements of tip (x, y), centre (z) and
/// base (x, y), expressed in the real instrument frame.
pub fn build_virtual_instrument(
    tree: &KinematicTree,
    task: RcmTask,
    mass: f64,
    inertia: Matrix3<f64>,
) -> Result<MechanismSpec, MechanismError> {
    if !(mass > 0.0) {
        return Err(MechanismError::InvalidParameter(format!("virtual link mass must be positive, got {mass}")));
    }
    crate::model::check_inertia("virtual instrument", mass, &inertia)?;
    let mut robot = tree.clone();
    let instrument = prepare_instrument(&mut robot)?;
    check_task(&robot, &task)?;
    let mut extended = robot.clone();
    let root = extended.root().to_string();
    virtual_chain(&mut extended, &root, &task.rcm)?;

    let mut link = KinematicTree::from_parts(vec![crate::model::UrdfLink::massless("world")], vec![])?;
    virtual_chain(&mut link, "world", &task.rcm)?;
    link.set_body_inertia(
        2,
        BodyInertia {
            mass,
            com: Vector3::new(0.0, 0.0, 0.5 * instrument.length),
            inertia,
        },
    );
    let m_test = Kinematics::new(&link, &DVector::zeros(3))?.mass_matrix(&link);
    if m_test.cholesky().is_none() {
        return Err(MechanismError::SingularExtensionInertia);
    }

    let l = instrument.length;
    let z = Vector3::zeros();
    let along = |s: f64| Vector3::new(0.0, 0.0, s);
    let mut rows = robot_rows(&extended, &task)?;
    let rel = |a: &str, b_local: Vector3<f64>, comps: &[usize], label: &str| {
        CoordinateMap::frame_relative_displacement(&extended, a, z, VIRTUAL_AXIAL, b_local, INSTRUMENT_FRAME, comps, label)
    };
    rows.push(rel(INSTRUMENT_TIP, along(l), &[0, 1], "tip")?);
    rows.push(rel(INSTRUMENT_CENTER, along(0.5 * l), &[2], "center")?);
    rows.push(rel(INSTRUMENT_FRAME, z, &[0, 1], "base")?);
    let coords = stack(&rows)?;
    let (springs, dampers) = zero_laws(coords.arity());
    Ok(MechanismSpec {
        kind: MechanismKind::VirtualInstrument,
        task,
        instrument,
        extension: DynamicExtension {
            robot_dof: robot.dof(),
            joint_names: vec![VIRTUAL_RX.into(), VIRTUAL_RY.into(), VIRTUAL_AXIAL.into()],
            inertia: ExtensionInertia::Link(link),
        },
        robot,
        extended,
        coords,
        springs,
        dampers,
        gravity: DEFAULT_GRAVITY,
        gravity_compensation: true,
    })
}

/// Per-row spring and damper forces, F_c = f_s(z) + f_d(ż).
pub fn controller_force(spec: &MechanismSpec, z: &DVector<f64>, zdot: &DVector<f64>) -> Result<DVector<f64>, MechanismError> {
    check_dim(spec.arity(), z.len())?;
    check_dim(spec.arity(), zdot.len())?;
    Ok(DVector::from_iterator(
        z.len(),
        (0..z.len()).map(|i| spec.springs[i].force(z[i]) + spec.dampers[i].force(zdot[i])),
    ))
}

impl MechanismSpec {
    pub fn arity(&self) -> usize {
        self.coords.arity()
    }

    pub fn robot_dof(&self) -> usize {
        self.robot.dof()
    }

    pub fn extension_dof(&self) -> usize {
        self.extension.dof()
    }

    pub fn extended_dof(&self) -> usize {
        self.extended.dof()
    }

    pub fn labels(&self) -> &[String] {
        self.coords.labels()
    }

    /// Stiffness and damping vectors in row order.
    pub fn gains(&self) -> (DVector<f64>, DVector<f64>) {
        let n = self.arity();
        (
            DVector::from_iterator(n, self.springs.iter().map(SpringLaw::stiffness)),
            DVector::from_iterator(n, self.dampers.iter().map(DamperLaw::damping)),
        )
    }

    /// Replace stiffness and damping values, keeping each spring's law shape.
    pub fn with_gains(&self, k: &DVector<f64>, c: &DVector<f64>) -> Result<MechanismSpec, MechanismError> {
        check_dim(self.arity(), k.len())?;
        check_dim(self.arity(), c.len())?;
        let mut out = self.clone();
        for i in 0..self.arity() {
            if !k[i].is_finite() || !c[i].is_finite() {
                return Err(MechanismError::InvalidParameter(format!("non-finite gain on row {i}")));
            }
            out.springs[i] = self.springs[i].with_stiffness(k[i]);
            out.dampers[i] = DamperLaw::Linear { c: c[i] };
        }
        Ok(out)
    }

    /// Gains given per row label.
    pub fn with_labeled_gains(&self, rows: &[(String, f64, f64)]) -> Result<MechanismSpec, MechanismError> {
        let labels = self.labels();
        if rows.len() != labels.len() || rows.iter().zip(labels).any(|(r, l)| &r.0 != l) {
            let got: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
            return Err(MechanismError::LabelMismatch(format!("expected {labels:?}, got {got:?}")));
        }
        let k = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        let c = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.2));
        self.with_gains(&k, &c)
    }

    pub fn split<'a>(&self, qe: &'a DVector<f64>) -> (nalgebra::DVectorView<'a, f64>, nalgebra::DVectorView<'a, f64>) {
        let n = self.robot_dof();
        (qe.rows(0, n), qe.rows(n, qe.len() - n))
    }

    pub fn join(&self, q: &DVector<f64>, qc: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(q.len() + qc.len());
        out.rows_mut(0, q.len()).copy_from(q);
        out.rows_mut(q.len(), qc.len()).copy_from(qc);
        out
    }

    /// Extended inertia M_e = blockdiag(M(q), M_c(q_c)).
    pub fn extended_mass_matrix(&self, q: &DVector<f64>, qc: &DVector<f64>) -> Result<DMatrix<f64>, MechanismError> {
        let m = Kinematics::new(&self.robot, q)?.mass_matrix(&self.robot);
        check_dim(self.extension_dof(), qc.len())?;
        let mc = self.extension.mass_matrix(qc);
        let (n, nc) = (m.nrows(), mc.nrows());
        let mut out = DMatrix::zeros(n + nc, n + nc);
        out.view_mut((0, 0), (n, n)).copy_from(&m);
        out.view_mut((n, n), (nc, nc)).copy_from(&mc);
        Ok(out)
    }

    pub fn coordinates(&self, qe: &DVector<f64>, reference: &ReferenceSample) -> Result<CoordinateEval, MechanismError> {
        Ok(self.coords.eval_full(&self.extended, qe, reference)?)
    }

    /// Everything the controller computes at one instant (Fig.-7 style loop):
    /// the coordinate bank, the spring/damper forces, the robot torque and the
    /// accelerations of the virtual joints.
    pub fn controller_output(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        ext: &ExtensionState,
        reference: &ReferenceSample,
    ) -> Result<ControllerOutput, MechanismError> {
        let n = self.robot_dof();
        check_dim(n, q.len())?;
        check_dim(n, qdot.len())?;
        check_dim(self.extension_dof(), ext.qc.len())?;
        check_dim(self.extension_dof(), ext.qdc.len())?;
        let qe = self.join(q, &ext.qc);
        let qde = self.join(qdot, &ext.qdc);
        let CoordinateEval { z, jac, dzdt } = self.coordinates(&qe, reference)?;
        let zdot = &jac * &qde + &dzdt;
        let force = controller_force(self, &z, &zdot)?;
        let gen = jac.transpose() * &force;
        let u_nog = -gen.rows(0, n).into_owned();
        let gravity = if self.gravity_compensation {
            Kinematics::new(&self.robot, q)?.inverse_dynamics(&self.robot, &DVector::zeros(n), &DVector::zeros(n), &self.gravity)
        } else {
            DVector::zeros(n)
        };
        let mc = self.extension.mass_matrix(&ext.qc);
        let rhs = -self.extension.bias(&ext.qc, &ext.qdc) - gen.rows(n, self.extension_dof());
        let qddot_c = mc.cholesky().ok_or(MechanismError::SingularExtensionInertia)?.solve(&rhs);
        Ok(ControllerOutput {
            u: &gravity + &u_nog,
            u_nog,
            gravity,
            qddot_c,
            force,
            z,
            zdot,
            jac,
            dzdt,
        })
    }

    /// Spring energy Σ E_i(z_i).
    pub fn spring_energy(&self, z: &DVector<f64>) -> f64 {
        self.springs.iter().zip(z.iter()).map(|(s, &zi)| s.energy(zi)).sum()
    }

    /// Power drawn by the dampers, f_dᵀ ż ≥ 0.
    pub fn damper_power(&self, zdot: &DVector<f64>) -> f64 {
        self.dampers.iter().zip(zdot.iter()).map(|(d, &v)| d.force(v) * v).sum()
    }

    /// Initial virtual state with zero velocity and minimal spring energy for
    /// robot configuration `q`: the virtual joint(s) are placed on the
    /// projection of the real instrument onto the RCM constraint.
    pub fn initial_extension_state(&self, q: &DVector<f64>) -> Result<ExtensionState, MechanismError> {
        let kin = Kinematics::new(&self.robot, q)?;
        let frame = self.robot.frame(INSTRUMENT_FRAME)?;
        let pose = kin.pose_of(&frame);
        let base = pose.translation.vector;
        let axis = pose.rotation * Vector3::z();
        let rel = self.task.rcm - base;
        let qc = match self.kind {
            MechanismKind::PrismaticExtension => DVector::from_element(1, axis.dot(&rel)),
            MechanismKind::VirtualInstrument => {
                let r0 = Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI);
                let v = r0.inverse() * axis;
                if v.x.abs() > GIMBAL_LIMIT {
                    return Err(MechanismError::GimbalLock);
                }
                DVector::from_column_slice(&[(-v.y).atan2(v.z), v.x.asin(), -axis.dot(&rel)])
            }
        };
        Ok(ExtensionState::at_rest(qc))
    }

    /// Robot kinetic energy + extension kinetic energy + spring energy.
    /// Gravity potential is excluded: it is cancelled by the compensation.
    pub fn total_energy(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        ext: &ExtensionState,
        reference: &ReferenceSample,
    ) -> Result<f64, MechanismError> {
        let me = self.extended_mass_matrix(q, &ext.qc)?;
        let qde = self.join(qdot, &ext.qdc);
        let z = self.coordinates(&self.join(q, &ext.qc), reference)?.z;
        Ok(0.5 * qde.dot(&(me * &qde)) + self.spring_energy(&z))
    }

    /// One controller period with the robot state held: returns the torque at
    /// the start of the period and the virtual state advanced by RK4.
    pub fn control_step(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        ext: &ExtensionState,
        reference: &ReferenceSample,
        dt: f64,
    ) -> Result<(DVector<f64>, ExtensionState), MechanismError> {
        let out = self.controller_output(q, qdot, ext, reference)?;
        let f = |s: &ExtensionState| -> Result<(DVector<f64>, DVector<f64>), MechanismError> {
            Ok((s.qdc.clone(), self.controller_output(q, qdot, s, reference)?.qddot_c))
        };
        let add = |s: &ExtensionState, d: &(DVector<f64>, DVector<f64>), h: f64| ExtensionState {
            qc: &s.qc + &d.0 * h,
            qdc: &s.qdc + &d.1 * h,
        };
        let k1 = (ext.qdc.clone(), out.qddot_c.clone());
        let k2 = f(&add(ext, &k1, 0.5 * dt))?;
        let k3 = f(&add(ext, &k2, 0.5 * dt))?;
        let k4 = f(&add(ext, &k3, dt))?;
        let next = ExtensionState {
            qc: &ext.qc + (&k1.0 + &k2.0 * 2.0 + &k3.0 * 2.0 + &k4.0) * (dt / 6.0),
            qdc: &ext.qdc + (&k1.1 + &k2.1 * 2.0 + &k3.1 * 2.0 + &k4.1) * (dt / 6.0),
        };
        Ok((out.u, next))
    }
}

/// Replace the RCM springs of the first two slider rows by deadzone springs of
/// half-widths a_x/2 and a_y/2 (slope = current stiffness) and scale their
/// dampers. `axes` optionally re-expresses the three slider rows in a rotated
/// basis (columns = new axes in world coordinates); world axes otherwise.
pub fn relax_rcm_rectangular(
    spec: &MechanismSpec,
    a_x: f64,
    a_y: f64,
    damper_scale: f64,
    axes: Option<Matrix3<f64>>,
) -> Result<MechanismSpec, MechanismError> {
    if spec.kind != MechanismKind::PrismaticExtension {
        return Err(MechanismError::WrongMechanismKind {
            expected: MechanismKind::PrismaticExtension.as_str(),
        });
    }
    if !(a_x >= 0.0 && a_y >= 0.0 && damper_scale >= 0.0) {
        return Err(MechanismError::InvalidParameter("deadzone widths and damper scale must be non-negative".into()));
    }
    let mut out = spec.clone();
    const FIRST: usize = 5;
    if let Some(r) = axes {
        out.coords.rotate_world_rows(FIRST, 3, r)?;
    }
    for (row, a) in [(FIRST, a_x), (FIRST + 1, a_y)] {
        out.springs[row] = SpringLaw::Deadzone {
            k_outer: spec.springs[row].stiffness(),
            half_width: 0.5 * a,
        };
        out.dampers[row] = DamperLaw::Linear {
            c: spec.dampers[row].damping() * damper_scale,
        };
    }
    Ok(out)
}
