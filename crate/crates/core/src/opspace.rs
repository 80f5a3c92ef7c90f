//! Operation-space coordinates z = h(q_e) with analytic Jacobians.
//!
//! Every row of a [`CoordinateMap`] is zero at the desired equilibrium. Point
//! coordinates are selected components of a displacement vector
//! d = p_A − p_B, expressed either in the world (optionally through a fixed
//! rotation) or in a moving frame of the tree.

use nalgebra::{DMatrix, DVector, Matrix3, Point3, Vector3};

use crate::dynamics::{check_dim, Kinematics};
use crate::error::ModelError;
use crate::model::{Frame, KinematicTree};

/// Reference signal value at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSample {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl ReferenceSample {
    pub fn fixed(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortSample {
    pub z: DVector<f64>,
    pub zdot: DVector<f64>,
}

/// Full evaluation: value, Jacobian and explicit time derivative ∂z/∂t.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateEval {
    pub z: DVector<f64>,
    pub jac: DMatrix<f64>,
    pub dzdt: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointOnTree {
    pub frame: Frame,
    pub local: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Anchor {
    Fixed(Vector3<f64>),
    /// The externally supplied reference signal.
    Reference,
    Point(PointOnTree),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Basis {
    /// z = S Eᵀ d for a fixed rotation E (identity for plain world axes).
    World(Matrix3<f64>),
    /// z = S R_F(q)ᵀ d for a frame F of the tree.
    Frame(Frame),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Displacement {
        point: PointOnTree,
        anchor: Anchor,
        basis: Basis,
        components: Vec<usize>,
    },
    JointOffset {
        joint: usize,
        rest: f64,
    },
}

impl Term {
    fn arity(&self) -> usize {
        match self {
            Term::Displacement { components, .. } => components.len(),
            Term::JointOffset { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateMap {
    dof: usize,
    terms: Vec<Term>,
    labels: Vec<String>,
}

const AXES: [&str; 3] = ["x", "y", "z"];

fn point_arg(tree: &KinematicTree, frame: &str, local: Vector3<f64>) -> Result<PointOnTree, ModelError> {
    Ok(PointOnTree {
        frame: tree.frame(frame)?,
        local,
    })
}

fn component_labels(label: &str, components: &[usize]) -> Vec<String> {
    components.iter().map(|&c| format!("{label}_{}", AXES[c])).collect()
}

fn check_components(components: &[usize]) -> Result<(), ModelError> {
    if components.is_empty() || components.iter().any(|&c| c > 2) {
        return Err(ModelError::InvalidValue {
            line: 0,
            message: format!("invalid component selection {components:?}"),
        });
    }
    Ok(())
}

impl CoordinateMap {
    fn single(tree: &KinematicTree, term: Term, labels: Vec<String>) -> Self {
        Self {
            dof: tree.dof(),
            terms: vec![term],
            labels,
        }
    }

    /// World-frame vector from the reference (signal or fixed point) to a point on the tree.
    pub fn world_point_offset(
        tree: &KinematicTree,
        frame: &str,
        local: Vector3<f64>,
        reference: Option<Vector3<f64>>,
        label: &str,
    ) -> Result<Self, ModelError> {
        let anchor = reference.map_or(Anchor::Reference, Anchor::Fixed);
        let term = Term::Displacement {
            point: point_arg(tree, frame, local)?,
            anchor,
            basis: Basis::World(Matrix3::identity()),
            components: vec![0, 1, 2],
        };
        Ok(Self::single(tree, term, component_labels(label, &[0, 1, 2])))
    }

    /// Scalar q_j − rest.
    pub fn joint_offset(tree: &KinematicTree, joint: usize, rest: f64, label: &str) -> Result<Self, ModelError> {
        if joint >= tree.dof() {
            return Err(ModelError::DimensionMismatch {
                expected: tree.dof(),
                got: joint + 1,
            });
        }
        Ok(Self::single(tree, Term::JointOffset { joint, rest }, vec![label.to_string()]))
    }

    /// Selected components of p_A − p_B expressed in the moving frame `expressed_in`.
    #[allow(clippy::too_many_arguments)]
    pub fn frame_relative_displacement(
        tree: &KinematicTree,
        frame_a: &str,
        local_a: Vector3<f64>,
        frame_b: &str,
        local_b: Vector3<f64>,
        expressed_in: &str,
        components: &[usize],
        label: &str,
    ) -> Result<Self, ModelError> {
        check_components(components)?;
        let term = Term::Displacement {
            point: point_arg(tree, frame_a, local_a)?,
            anchor: Anchor::Point(point_arg(tree, frame_b, local_b)?),
            basis: Basis::Frame(tree.frame(expressed_in)?),
            components: components.to_vec(),
        };
        Ok(Self::single(tree, term, component_labels(label, components)))
    }

    /// World-frame vector from a fixed world anchor to a point on the tree.
    pub fn world_point_to_fixed_point(
        tree: &KinematicTree,
        frame: &str,
        local: Vector3<f64>,
        anchor: Vector3<f64>,
        label: &str,
    ) -> Result<Self, ModelError> {
        Self::world_point_offset(tree, frame, local, Some(anchor), label)
    }

    /// Assemble a map directly from terms (advanced use; labels must match the arity).
    pub fn from_terms(dof: usize, terms: Vec<Term>, labels: Vec<String>) -> Result<Self, ModelError> {
        let arity: usize = terms.iter().map(Term::arity).sum();
        check_dim(arity, labels.len())?;
        Ok(Self { dof, terms, labels })
    }

    pub fn arity(&self) -> usize {
        self.labels.len()
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Re-express the world-frame displacement rows in `[first, first + len)`
    /// through the rotation `basis` (columns are the new axes in world coordinates).
    /// Each affected term must lie entirely inside the range.
    pub fn rotate_world_rows(&mut self, first: usize, len: usize, basis: Matrix3<f64>) -> Result<(), ModelError> {
        let mut row = 0;
        for term in &mut self.terms {
            let a = term.arity();
            let overlaps = row < first + len && first < row + a;
            if overlaps {
                match term {
                    Term::Displacement {
                        basis: b @ Basis::World(_),
                        ..
                    } if row >= first && row + a <= first + len => *b = Basis::World(basis),
                    _ => {
                        return Err(ModelError::InvalidValue {
                            line: 0,
                            message: format!("rows {first}..{} are not whole world-frame terms", first + len),
                        })
                    }
                }
            }
            row += a;
        }
        Ok(())
    }

    pub fn eval_with(&self, tree: &KinematicTree, kin: &Kinematics, q: &DVector<f64>, reference: &ReferenceSample) -> CoordinateEval {
        let n = self.dof;
        let m = self.arity();
        let mut z = DVector::zeros(m);
        let mut jac = DMatrix::zeros(m, n);
        let mut dzdt = DVector::zeros(m);
        let mut row = 0;
        let world_point = |p: &PointOnTree| kin.pose_of(&p.frame).transform_point(&Point3::from(p.local)).coords;
        for term in &self.terms {
            match term {
                Term::JointOffset { joint, rest } => {
                    z[row] = q[*joint] - rest;
                    jac[(row, *joint)] = 1.0;
                    row += 1;
                }
                Term::Displacement {
                    point,
                    anchor,
                    basis,
                    components,
                } => {
                    let pa = world_point(point);
                    let mut jd = kin.point_jacobian(tree, &point.frame, &point.local);
                    let mut vt = Vector3::zeros();
                    let pb = match anchor {
                        Anchor::Fixed(p) => *p,
                        Anchor::Reference => {
                            vt = -reference.velocity;
                            reference.position
                        }
                        Anchor::Point(b) => {
                            jd -= kin.point_jacobian(tree, &b.frame, &b.local);
                            world_point(b)
                        }
                    };
                    let d = pa - pb;
                    let (rot, full) = match basis {
                        Basis::World(e) => (*e, jd),
                        Basis::Frame(f) => {
                            let r = kin.pose_of(f).rotation.to_rotation_matrix().into_inner();
                            let jw = kin.angular_jacobian(tree, f);
                            let dx = Matrix3::new(0.0, -d.z, d.y, d.z, 0.0, -d.x, -d.y, d.x, 0.0);
                            // frame rotation contributes d × ω
                            let mut full = jd;
                            full += dx * jw;
                            (r, full)
                        }
                    };
                    let rt = rot.transpose();
                    let zl = rt * d;
                    let jl = rt * full;
                    let tl = rt * vt;
                    for &c in components {
                        z[row] = zl[c];
                        jac.row_mut(row).copy_from(&jl.row(c));
                        dzdt[row] = tl[c];
                        row += 1;
                    }
                }
            }
        }
        CoordinateEval { z, jac, dzdt }
    }

    pub fn eval_full(&self, tree: &KinematicTree, q: &DVector<f64>, reference: &ReferenceSample) -> Result<CoordinateEval, ModelError> {
        check_dim(self.dof, tree.dof())?;
        let kin = Kinematics::new(tree, q)?;
        Ok(self.eval_with(tree, &kin, q, reference))
    }

    pub fn value(&self, tree: &KinematicTree, q: &DVector<f64>, reference: &ReferenceSample) -> Result<DVector<f64>, ModelError> {
        Ok(self.eval_full(tree, q, reference)?.z)
    }

    pub fn jacobian(&self, tree: &KinematicTree, q: &DVector<f64>) -> Result<DMatrix<f64>, ModelError> {
        Ok(self.eval_full(tree, q, &ReferenceSample::fixed(Vector3::zeros()))?.jac)
    }

    /// (z, ż) with ż = J q̇ + ∂z/∂t; the last term is non-zero only for rows
    /// that track a moving reference.
    pub fn evaluate(
        &self,
        tree: &KinematicTree,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        reference: &ReferenceSample,
    ) -> Result<PortSample, ModelError> {
        check_dim(self.dof, qdot.len())?;
        let e = self.eval_full(tree, q, reference)?;
        Ok(PortSample {
            zdot: &e.jac * qdot + e.dzdt,
            z: e.z,
        })
    }

    /// Generalised forces u = Jᵀ F.
    pub fn force_to_torque(&self, tree: &KinematicTree, q: &DVector<f64>, f: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        check_dim(self.arity(), f.len())?;
        Ok(self.jacobian(tree, q)?.transpose() * f)
    }
}

/// Concatenate maps defined over the same coordinates; rows keep their order.
pub fn stack(maps: &[CoordinateMap]) -> Result<CoordinateMap, ModelError> {
    let first = maps.first().ok_or(ModelError::DimensionMismatch { expected: 1, got: 0 })?;
    let mut out = CoordinateMap {
        dof: first.dof,
        terms: Vec::new(),
        labels: Vec::new(),
    };
    for m in maps {
        check_dim(first.dof, m.dof)?;
        out.terms.extend(m.terms.iter().cloned());
        out.labels.extend(m.labels.iter().cloned());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::urdf::parse_urdf;

    const ARM: &str = r#"<robot name="r"><link name="w"/>
        <link name="a"><inertial><mass value="1"/><inertia ixx="0.1" iyy="0.1" izz="0.1"/></inertial></link>
        <joint name="j" type="revolute"><parent link="w"/><child link="a"/><axis xyz="0 0 1"/></joint></robot>"#;

    #[test]
    fn tangential_force_at_radius() {
        let t = parse_urdf(ARM).unwrap();
        let map = CoordinateMap::world_point_to_fixed_point(&t, "a", Vector3::new(0.3, 0.0, 0.0), Vector3::zeros(), "p").unwrap();
        let u = map
            .force_to_torque(&t, &DVector::zeros(1), &DVector::from_column_slice(&[0.0, 1.0, 0.0]))
            .unwrap();
        assert!((u[0] - 0.3).abs() < 1e-15);
        let zero = map.force_to_torque(&t, &DVector::zeros(1), &DVector::zeros(3)).unwrap();
        assert_eq!(zero[0], 0.0);
    }

    #[test]
    fn joint_offset_vanishes_at_rest() {
        let t = parse_urdf(ARM).unwrap();
        let rest = std::f64::consts::FRAC_PI_6;
        let map = CoordinateMap::joint_offset(&t, 0, rest, "j2").unwrap();
        let s = map
            .evaluate(&t, &DVector::from_element(1, rest), &DVector::from_element(1, 2.0), &ReferenceSample::fixed(Vector3::zeros()))
            .unwrap();
        assert_eq!(s.z[0], 0.0);
        assert_eq!(s.zdot[0], 2.0);
        assert_eq!(map.labels(), ["j2"]);
    }

    #[test]
    fn reference_velocity_enters_rate() {
        let t = parse_urdf(ARM).unwrap();
        let map = CoordinateMap::world_point_offset(&t, "a", Vector3::x(), None, "ee").unwrap();
        let r = ReferenceSample {
            position: Vector3::new(1.0, 0.0, 0.0),
            velocity: Vector3::new(0.0, 0.5, 0.0),
        };
        let s = map.evaluate(&t, &DVector::zeros(1), &DVector::from_element(1, 1.0), &r).unwrap();
        assert!(s.z.norm() < 1e-15);
        assert!((s.zdot - DVector::from_column_slice(&[0.0, 0.5, 0.0])).norm() < 1e-15);
        assert_eq!(map.labels(), ["ee_x", "ee_y", "ee_z"]);
    }

    #[test]
    fn stack_concatenates() {
        let t = parse_urdf(ARM).unwrap();
        let a = CoordinateMap::world_point_offset(&t, "a", Vector3::x(), Some(Vector3::zeros()), "p").unwrap();
        let b = CoordinateMap::joint_offset(&t, 0, 0.1, "j").unwrap();
        let s = stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.arity(), 4);
        let q = DVector::from_element(1, 0.7);
        let js = s.jacobian(&t, &q).unwrap();
        assert_eq!(js.rows(0, 3), a.jacobian(&t, &q).unwrap());
        assert_eq!(js.rows(3, 1), b.jacobian(&t, &q).unwrap());
        assert_eq!(stack(&[a.clone()]).unwrap(), a);
        assert!(stack(&[]).is_err());
    }

    #[test]
    fn rotation_applies_only_to_whole_world_terms() {
        let t = parse_urdf(ARM).unwrap();
        let a = CoordinateMap::world_point_offset(&t, "a", Vector3::x(), Some(Vector3::zeros()), "p").unwrap();
        let b = CoordinateMap::joint_offset(&t, 0, 0.1, "j").unwrap();
        let mut s = stack(&[a, b]).unwrap();
        assert!(s.rotate_world_rows(1, 3, Matrix3::identity()).is_err());
        let rz = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), 0.5).into_inner();
        s.rotate_world_rows(0, 3, rz).unwrap();
        let z = s.value(&t, &DVector::zeros(1), &ReferenceSample::fixed(Vector3::zeros())).unwrap();
        assert!((z[0] - 0.5f64.cos()).abs() < 1e-15 && (z[1] + 0.5f64.sin()).abs() < 1e-15);
    }
}
