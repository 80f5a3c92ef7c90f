//! Rigid-body kinematics and the joint-space dynamics terms M(q), C(q, q̇), g(q).
//!
//! Spatial vectors are expressed in world coordinates, referenced at the world
//! origin, with the angular part first: a motion vector is (ω, v₀) and a force
//! vector is (n₀, f).

use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, Matrix6, Point3, Vector3, Vector6};

use crate::error::ModelError;
use crate::model::{Frame, JointKind, KinematicTree};

pub const DEFAULT_GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, -9.81);


#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl JointState {
    pub fn new(q: DVector<f64>, qdot: DVector<f64>) -> Result<Self, ModelError> {
        check_dim(q.len(), qdot.len())?;
        Ok(Self { q, qdot })
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self { q, qdot: DVector::zeros(n) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsTerms {
    pub m: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub g: DVector<f64>,
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<(), ModelError> {
    if expected == got {
        Ok(())
    } else {
        Err(ModelError::DimensionMismatch { expected, got })
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn cross_motion(v: &Vector6<f64>, m: &Vector6<f64>) -> Vector6<f64> {
    let (w, v0) = (v.fixed_rows::<3>(0), v.fixed_rows::<3>(3));
    let (mw, mv) = (m.fixed_rows::<3>(0), m.fixed_rows::<3>(3));
    let top = w.cross(&mw);
    let bot = v0.cross(&mw) + w.cross(&mv);
    Vector6::new(top.x, top.y, top.z, bot.x, bot.y, bot.z)
}

/// Matrix of v×, acting on motion vectors.
fn crm(v: &Vector6<f64>) -> Matrix6<f64> {
    let (w, v0) = (skew(&v.fixed_rows::<3>(0).into_owned()), skew(&v.fixed_rows::<3>(3).into_owned()));
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&w);
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&v0);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&w);
    out
}

fn cross_force(v: &Vector6<f64>, f: &Vector6<f64>) -> Vector6<f64> {
    let (w, v0) = (v.fixed_rows::<3>(0), v.fixed_rows::<3>(3));
    let (n, fl) = (f.fixed_rows::<3>(0), f.fixed_rows::<3>(3));
    let top = w.cross(&n) + v0.cross(&fl);
    let bot = w.cross(&fl);
    Vector6::new(top.x, top.y, top.z, bot.x, bot.y, bot.z)
}

/// World-frame kinematic snapshot of every body at one configuration.
#[derive(Debug, Clone)]
pub struct Kinematics {
    /// World pose of each body frame.
    pub body_poses: Vec<Isometry3<f64>>,
    /// Spatial motion subspace of each joint.
    pub subspaces: Vec<Vector6<f64>>,
}

impl Kinematics {
    pub fn new(tree: &KinematicTree, q: &DVector<f64>) -> Result<Self, ModelError> {
        check_dim(tree.dof(), q.len())?;
        let mut body_poses: Vec<Isometry3<f64>> = Vec::with_capacity(tree.dof());
        let mut subspaces = Vec::with_capacity(tree.dof());
        for (i, j) in tree.joints().iter().enumerate() {
            let parent = j.parent.map_or(Isometry3::identity(), |p| body_poses[p]);
            let joint_frame = parent * j.origin;
            let axis = joint_frame.rotation * j.axis.into_inner();
            let o = joint_frame.translation.vector;
            subspaces.push(match j.kind {
                JointKind::Revolute => {
                    let l = o.cross(&axis);
                    Vector6::new(axis.x, axis.y, axis.z, l.x, l.y, l.z)
                }
                JointKind::Prismatic => Vector6::new(0.0, 0.0, 0.0, axis.x, axis.y, axis.z),
            });
            body_poses.push(joint_frame * j.motion(q[i]));
        }
        Ok(Self { body_poses, subspaces })
    }

    pub fn pose_of(&self, frame: &Frame) -> Isometry3<f64> {
        match frame.body {
            Some(b) => self.body_poses[b] * frame.offset,
            None => frame.offset,
        }
    }

    /// World-frame linear-velocity Jacobian (3×n) of a point fixed to `frame`.
    pub fn point_jacobian(&self, tree: &KinematicTree, frame: &Frame, local: &Vector3<f64>) -> DMatrix<f64> {
        let p = self.pose_of(frame).transform_point(&Point3::from(*local)).coords;
        let mut jac = DMatrix::zeros(3, tree.dof());
        for i in tree.support(frame.body) {
            let s = &self.subspaces[i];
            let col = s.fixed_rows::<3>(3) + s.fixed_rows::<3>(0).cross(&p);
            jac.fixed_view_mut::<3, 1>(0, i).copy_from(&col);
        }
        jac
    }

    /// World-frame angular-velocity Jacobian (3×n) of `frame`.
    pub fn angular_jacobian(&self, tree: &KinematicTree, frame: &Frame) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(3, tree.dof());
        for i in tree.support(frame.body) {
            jac.fixed_view_mut::<3, 1>(0, i)
                .copy_from(&self.subspaces[i].fixed_rows::<3>(0));
        }
        jac
    }

    /// Spatial inertia of each body in world coordinates at the origin.
    pub fn spatial_inertias(&self, tree: &KinematicTree) -> Vec<Matrix6<f64>> {
        tree.joints()
            .iter()
            .zip(&self.body_poses)
            .map(|(j, pose)| {
                let b = &j.inertia;
                let r = pose.rotation.to_rotation_matrix();
                let c = pose.transform_point(&Point3::from(b.com)).coords;
                let ic = r.matrix() * b.inertia * r.matrix().transpose();
                let cx = skew(&c);
                let mut out = Matrix6::zeros();
                out.fixed_view_mut::<3, 3>(0, 0)
                    .copy_from(&(ic + cx * cx.transpose() * b.mass));
                out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(cx * b.mass));
                out.fixed_view_mut::<3, 3>(3, 0)
                    .copy_from(&(cx.transpose() * b.mass));
                out.fixed_view_mut::<3, 3>(3, 3)
                    .copy_from(&(Matrix3::identity() * b.mass));
                out
            })
            .collect()
    }

    /// Composite-rigid-body mass matrix.
    pub fn mass_matrix(&self, tree: &KinematicTree) -> DMatrix<f64> {
        let n = tree.dof();
        let mut ic = self.spatial_inertias(tree);
        for i in (0..n).rev() {
            if let Some(p) = tree.joint(i).parent {
                let child = ic[i];
                ic[p] += child;
            }
        }
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let f = ic[i] * self.subspaces[i];
            for j in tree.support(Some(i)) {
                let v = self.subspaces[j].dot(&f);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// Exact ∂M/∂q_k for every k. Joint k moves everything below it, so
    /// d S_i = S_k × S_i for axes strictly below k and d I = S_k ×* I − I S_k ×
    /// for the composite inertia of whatever k carries.
    pub fn mass_matrix_derivatives(&self, tree: &KinematicTree) -> Vec<DMatrix<f64>> {
        let n = tree.dof();
        let mut ic = self.spatial_inertias(tree);
        for i in (0..n).rev() {
            if let Some(p) = tree.joint(i).parent {
                let child = ic[i];
                ic[p] += child;
            }
        }
        // above[k][i]: joint k is on the path from the root to body i (inclusive)
        let mut above = vec![vec![false; n]; n];
        for (i, row) in (0..n).map(|i| (i, tree.support(Some(i)).collect::<Vec<_>>())) {
            for k in row {
                above[k][i] = true;
            }
        }
        let s = &self.subspaces;
        (0..n)
            .map(|k| {
                let x = crm(&s[k]);
                let rotate = |m: &Matrix6<f64>| -x.transpose() * m - m * x;
                let ds: Vec<Vector6<f64>> = (0..n)
                    .map(|i| if above[k][i] && k != i { x * s[i] } else { Vector6::zeros() })
                    .collect();
                let mut dm = DMatrix::zeros(n, n);
                for i in 0..n {
                    let dic = if above[k][i] {
                        rotate(&ic[i])
                    } else if above[i][k] {
                        rotate(&ic[k])
                    } else {
                        Matrix6::zeros()
                    };
                    let f = ic[i] * s[i];
                    let df = dic * s[i] + ic[i] * ds[i];
                    for j in tree.support(Some(i)) {
                        let v = ds[j].dot(&f) + s[j].dot(&df);
                        dm[(i, j)] = v;
                        dm[(j, i)] = v;
                    }
                }
                dm
            })
            .collect()
    }

    /// Recursive Newton–Euler inverse dynamics.
    pub fn inverse_dynamics(
        &self,
        tree: &KinematicTree,
        qdot: &DVector<f64>,
        qddot: &DVector<f64>,
        gravity: &Vector3<f64>,
    ) -> DVector<f64> {
        let n = tree.dof();
        let inertias = self.spatial_inertias(tree);
        let base_acc = Vector6::new(0.0, 0.0, 0.0, -gravity.x, -gravity.y, -gravity.z);
        let mut vel: Vec<Vector6<f64>> = Vec::with_capacity(n);
        let mut acc: Vec<Vector6<f64>> = Vec::with_capacity(n);
        let mut force: Vec<Vector6<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let (vp, ap) = match tree.joint(i).parent {
                Some(p) => (vel[p], acc[p]),
                None => (Vector6::zeros(), base_acc),
            };
            let s = &self.subspaces[i];
            let v = vp + s * qdot[i];
            let a = ap + s * qddot[i] + cross_motion(&v, &(s * qdot[i]));
            let iv = inertias[i] * v;
            force.push(inertias[i] * a + cross_force(&v, &iv));
            vel.push(v);
            acc.push(a);
        }
        let mut tau = DVector::zeros(n);
        for i in (0..n).rev() {
            tau[i] = self.subspaces[i].dot(&force[i]);
            if let Some(p) = tree.joint(i).parent {
                let fi = force[i];
                force[p] += fi;
            }
        }
        tau
    }
}

pub fn forward_kinematics(tree: &KinematicTree, q: &DVector<f64>, frame: &str) -> Result<Isometry3<f64>, ModelError> {
    let f = tree.frame(frame)?;
    Ok(Kinematics::new(tree, q)?.pose_of(&f))
}

/// World position of a point given in `frame` coordinates.
pub fn point_position(
    tree: &KinematicTree,
    q: &DVector<f64>,
    frame: &str,
    local: &Vector3<f64>,
) -> Result<Vector3<f64>, ModelError> {
    Ok(forward_kinematics(tree, q, frame)?
        .transform_point(&Point3::from(*local))
        .coords)
}

pub fn point_jacobian(
    tree: &KinematicTree,
    q: &DVector<f64>,
    frame: &str,
    local: &Vector3<f64>,
) -> Result<DMatrix<f64>, ModelError> {
    let f = tree.frame(frame)?;
    Ok(Kinematics::new(tree, q)?.point_jacobian(tree, &f, local))
}

pub fn angular_jacobian(tree: &KinematicTree, q: &DVector<f64>, frame: &str) -> Result<DMatrix<f64>, ModelError> {
    let f = tree.frame(frame)?;
    Ok(Kinematics::new(tree, q)?.angular_jacobian(tree, &f))
}

pub fn mass_matrix(tree: &KinematicTree, q: &DVector<f64>) -> Result<DMatrix<f64>, ModelError> {
    Ok(Kinematics::new(tree, q)?.mass_matrix(tree))
}

pub fn inverse_dynamics(
    tree: &KinematicTree,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    qddot: &DVector<f64>,
    gravity: &Vector3<f64>,
) -> Result<DVector<f64>, ModelError> {
    check_dim(tree.dof(), qdot.len())?;
    check_dim(tree.dof(), qddot.len())?;
    Ok(Kinematics::new(tree, q)?.inverse_dynamics(tree, qdot, qddot, gravity))
}

pub fn gravity_vector(tree: &KinematicTree, q: &DVector<f64>, gravity: &Vector3<f64>) -> Result<DVector<f64>, ModelError> {
    let z = DVector::zeros(tree.dof());
    inverse_dynamics(tree, q, &z, &z, gravity)
}

/// Coriolis/centrifugal matrix from the Christoffel symbols of M(q), so that
/// Ṁ − 2C is skew-symmetric. ∂M is analytic, so C is exact to rounding.
pub fn coriolis_matrix(tree: &KinematicTree, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<DMatrix<f64>, ModelError> {
    let n = tree.dof();
    check_dim(n, q.len())?;
    check_dim(n, qdot.len())?;
    let dm = Kinematics::new(tree, q)?.mass_matrix_derivatives(tree);
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += 0.5 * (dm[k][(i, j)] + dm[j][(i, k)] - dm[i][(j, k)]) * qdot[k];
            }
            c[(i, j)] = s;
        }
    }
    Ok(c)
}

pub fn dynamics_terms(tree: &KinematicTree, state: &JointState, gravity: &Vector3<f64>) -> Result<DynamicsTerms, ModelError> {
    Ok(DynamicsTerms {
        m: mass_matrix(tree, &state.q)?,
        c: coriolis_matrix(tree, &state.q, &state.qdot)?,
        g: gravity_vector(tree, &state.q, gravity)?,
    })
}

pub fn kinetic_energy(tree: &KinematicTree, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<f64, ModelError> {
    check_dim(tree.dof(), qdot.len())?;
    let m = mass_matrix(tree, q)?;
    Ok(0.5 * qdot.dot(&(m * qdot)))
}

/// Gravitational potential energy of all moving bodies (zero at the world origin).
pub fn potential_energy(tree: &KinematicTree, q: &DVector<f64>, gravity: &Vector3<f64>) -> Result<f64, ModelError> {
    let kin = Kinematics::new(tree, q)?;
    Ok(tree
        .joints()
        .iter()
        .zip(&kin.body_poses)
        .map(|(j, pose)| {
            let c = pose.transform_point(&Point3::from(j.inertia.com)).coords;
            -j.inertia.mass * gravity.dot(&c)
        })
        .sum())
}

/// Joint accelerations under torque `u`: q̈ = M⁻¹(u − C q̇ − g).
pub fn forward_dynamics(
    tree: &KinematicTree,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    u: &DVector<f64>,
    gravity: &Vector3<f64>,
) -> Result<DVector<f64>, ModelError> {
    check_dim(tree.dof(), u.len())?;
    let kin = Kinematics::new(tree, q)?;
    let bias = kin.inverse_dynamics(tree, qdot, &DVector::zeros(tree.dof()), gravity);
    let m = kin.mass_matrix(tree);
    let rhs = u - bias;
    match m.clone().cholesky() {
        Some(ch) => Ok(ch.solve(&rhs)),
        None => Ok(m.lu().solve(&rhs).unwrap_or_else(|| DVector::from_element(tree.dof(), f64::NAN))),
    }
}
