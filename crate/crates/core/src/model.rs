//! Serial/tree robot model: links, movable joints, and named frames.
//!
//! Fixed joints are folded away at construction time. Every movable joint
//! owns exactly one *body*: the rigid assembly of its child link plus all
//! links welded to it through fixed joints. Body `i` is moved by joint `i`,
//! and joints are stored in topological order (a parent body always has a
//! smaller index than its children).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Isometry3, Matrix3, Translation3, Unit, UnitQuaternion, Vector3};

use crate::error::ModelError;

/// Joint types accepted from URDF. `Continuous` behaves as an unlimited `Revolute`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UrdfJointType {
    Revolute,
    Continuous,
    Prismatic,
    Fixed,
}

impl UrdfJointType {
    pub fn as_str(self) -> &'static str {
        match self {
            UrdfJointType::Revolute => "revolute",
            UrdfJointType::Continuous => "continuous",
            UrdfJointType::Prismatic => "prismatic",
            UrdfJointType::Fixed => "fixed",
        }
    }
}

/// Link as declared in the document (inertial terms in the link frame).
#[derive(Debug, Clone, PartialEq)]
pub struct UrdfLink {
    pub name: String,
    pub mass: f64,
    /// Centre of mass in the link frame.
    pub com: Vector3<f64>,
    /// Inertia about the COM, expressed in the link frame.
    pub inertia: Matrix3<f64>,
    /// Whether the document carried an `<inertial>` block at all.
    pub has_inertial: bool,
}

impl UrdfLink {
    pub fn massless(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            mass: 0.0,
            com: Vector3::zeros(),
            inertia: Matrix3::zeros(),
            has_inertial: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrdfJoint {
    pub name: String,
    pub joint_type: UrdfJointType,
    pub parent: String,
    pub child: String,
    pub origin: Isometry3<f64>,
    pub axis: Unit<Vector3<f64>>,
    pub limits: Option<(f64, f64)>,
}

/// Movable joint kinds after ingest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// Mass properties of a body, expressed in its body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyInertia {
    pub mass: f64,
    pub com: Vector3<f64>,
    /// Rotational inertia about the COM.
    pub inertia: Matrix3<f64>,
}

impl BodyInertia {
    pub fn zero() -> Self {
        Self {
            mass: 0.0,
            com: Vector3::zeros(),
            inertia: Matrix3::zeros(),
        }
    }

    /// Combine with a second set of mass properties given in the same frame.
    pub fn combined(&self, other: &BodyInertia) -> BodyInertia {
        let mass = self.mass + other.mass;
        if mass <= 0.0 {
            return BodyInertia::zero();
        }
        let com = (self.com * self.mass + other.com * other.mass) / mass;
        let shift = |m: f64, c: &Vector3<f64>| -> Matrix3<f64> {
            let d = c - com;
            (Matrix3::identity() * d.norm_squared() - d * d.transpose()) * m
        };
        let inertia =
            self.inertia + shift(self.mass, &self.com) + other.inertia + shift(other.mass, &other.com);
        BodyInertia { mass, com, inertia }
    }

    /// Re-express mass properties given in frame `b` into frame `a`, where
    /// `a_from_b` maps `b` coordinates to `a` coordinates.
    pub fn transformed(&self, a_from_b: &Isometry3<f64>) -> BodyInertia {
        let r = a_from_b.rotation.to_rotation_matrix();
        BodyInertia {
            mass: self.mass,
            com: a_from_b.transform_point(&self.com.into()).coords,
            inertia: r.matrix() * self.inertia * r.matrix().transpose(),
        }
    }
}

/// A movable joint together with the body it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    /// Parent body index, `None` for the fixed root.
    pub parent: Option<usize>,
    /// Placement of the joint frame in the parent body frame (fixed offsets folded in).
    pub origin: Isometry3<f64>,
    /// Joint axis in the joint frame.
    pub axis: Unit<Vector3<f64>>,
    pub limits: Option<(f64, f64)>,
    /// Name of the link that defines the body frame.
    pub child_link: String,
    pub inertia: BodyInertia,
}

impl Joint {
    /// Transform produced by the joint at displacement `q`.
    pub fn motion(&self, q: f64) -> Isometry3<f64> {
        match self.kind {
            JointKind::Revolute => Isometry3::from_parts(
                Translation3::identity(),
                UnitQuaternion::from_axis_angle(&self.axis, q),
            ),
            JointKind::Prismatic => Isometry3::from_parts(
                Translation3::from(self.axis.into_inner() * q),
                UnitQuaternion::identity(),
            ),
        }
    }
}

/// A named frame: rigidly attached to a body (or the root) at a fixed offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub body: Option<usize>,
    pub offset: Isometry3<f64>,
}

impl Frame {
    pub fn world(offset: Isometry3<f64>) -> Self {
        Self { body: None, offset }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicTree {
    root: String,
    links: Vec<UrdfLink>,
    urdf_joints: Vec<UrdfJoint>,
    joints: Vec<Joint>,
    frames: BTreeMap<String, Frame>,
}

impl KinematicTree {
    /// Assemble a tree from document-level links and joints.
    pub fn from_parts(links: Vec<UrdfLink>, urdf_joints: Vec<UrdfJoint>) -> Result<Self, ModelError> {
        let mut link_index = BTreeMap::new();
        for (i, l) in links.iter().enumerate() {
            if link_index.insert(l.name.clone(), i).is_some() {
                return Err(ModelError::DuplicateName(l.name.clone()));
            }
        }
        let mut parent_joint: Vec<Option<usize>> = vec![None; links.len()];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); links.len()];
        for (j, joint) in urdf_joints.iter().enumerate() {
            let p = *link_index
                .get(&joint.parent)
                .ok_or_else(|| ModelError::UnknownLink(joint.parent.clone()))?;
            let c = *link_index
                .get(&joint.child)
                .ok_or_else(|| ModelError::UnknownLink(joint.child.clone()))?;
            if parent_joint[c].is_some() {
                return Err(ModelError::CyclicGraph(format!(
                    "link '{}' has more than one parent",
                    joint.child
                )));
            }
            parent_joint[c] = Some(j);
            children[p].push(j);
        }
        let roots: Vec<usize> = (0..links.len()).filter(|&i| parent_joint[i].is_none()).collect();
        let root = match roots.as_slice() {
            [r] => *r,
            [] => return Err(ModelError::CyclicGraph("no root link".into())),
            many => {
                return Err(ModelError::MultipleRoots(
                    many.iter().map(|&i| links[i].name.clone()).collect(),
                ))
            }
        };

        // Depth-first walk in document order; anything unreached sits on a cycle.
        let mut tree = KinematicTree {
            root: links[root].name.clone(),
            links: links.clone(),
            urdf_joints: urdf_joints.clone(),
            joints: Vec::new(),
            frames: BTreeMap::new(),
        };
        let mut visited = vec![false; links.len()];
        let mut stack = vec![(root, Frame::world(Isometry3::identity()))];
        while let Some((li, frame)) = stack.pop() {
            visited[li] = true;
            let link = &links[li];
            if let Some(b) = frame.body {
                let local = BodyInertia {
                    mass: link.mass,
                    com: link.com,
                    inertia: link.inertia,
                }
                .transformed(&frame.offset);
                tree.joints[b].inertia = tree.joints[b].inertia.combined(&local);
            }
            tree.frames.insert(link.name.clone(), frame);
            for &j in children[li].iter().rev() {
                let uj = &urdf_joints[j];
                let ci = link_index[&uj.child];
                let child_frame = match uj.joint_type {
                    UrdfJointType::Fixed => Frame {
                        body: frame.body,
                        offset: frame.offset * uj.origin,
                    },
                    ty => {
                        let child = &links[ci];
                        if !child.has_inertial {
                            return Err(ModelError::MissingInertial(child.name.clone()));
                        }
                        let kind = if ty == UrdfJointType::Prismatic {
                            JointKind::Prismatic
                        } else {
                            JointKind::Revolute
                        };
                        tree.joints.push(Joint {
                            name: uj.name.clone(),
                            kind,
                            parent: frame.body,
                            origin: frame.offset * uj.origin,
                            axis: uj.axis,
                            limits: if ty == UrdfJointType::Continuous { None } else { uj.limits },
                            child_link: child.name.clone(),
                            inertia: BodyInertia::zero(),
                        });
                        Frame {
                            body: Some(tree.joints.len() - 1),
                            offset: Isometry3::identity(),
                        }
                    }
                };
                stack.push((ci, child_frame));
            }
        }
        if let Some(i) = visited.iter().position(|v| !v) {
            return Err(ModelError::CyclicGraph(format!(
                "link '{}' is not reachable from the root",
                links[i].name
            )));
        }
        Ok(tree)
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn links(&self) -> &[UrdfLink] {
        &self.links
    }

    pub fn urdf_joints(&self) -> &[UrdfJoint] {
        &self.urdf_joints
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn joint(&self, index: usize) -> &Joint {
        &self.joints[index]
    }

    pub fn frames(&self) -> &BTreeMap<String, Frame> {
        &self.frames
    }

    pub fn frame(&self, name: &str) -> Result<Frame, ModelError> {
        self.frames
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::UnknownFrame(name.to_string()))
    }

    pub fn has_frame(&self, name: &str) -> bool {
        self.frames.contains_key(name)
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// Total mass of all bodies (root-welded links excluded).
    pub fn moving_mass(&self) -> f64 {
        self.joints.iter().map(|j| j.inertia.mass).sum()
    }

    /// Register an extra named frame relative to an existing one.
    pub fn add_frame(
        &mut self,
        name: &str,
        parent_frame: &str,
        offset: Isometry3<f64>,
    ) -> Result<(), ModelError> {
        if self.frames.contains_key(name) {
            return Err(ModelError::DuplicateName(name.to_string()));
        }
        let parent = self.frame(parent_frame)?;
        self.frames.insert(
            name.to_string(),
            Frame {
                body: parent.body,
                offset: parent.offset * offset,
            },
        );
        Ok(())
    }

    /// Weld additional mass to the body carrying `frame`. `inertia` is given in that frame.
    pub fn add_mass(&mut self, frame: &str, inertia: &BodyInertia) -> Result<(), ModelError> {
        let f = self.frame(frame)?;
        if let Some(b) = f.body {
            let local = inertia.transformed(&f.offset);
            self.joints[b].inertia = self.joints[b].inertia.combined(&local);
        }
        Ok(())
    }

    /// Append a movable joint whose child body is massless, mounted on `parent_frame`.
    /// The new body frame is registered under `name`. Returns the new joint index.
    pub fn push_joint(
        &mut self,
        name: &str,
        parent_frame: &str,
        origin: Isometry3<f64>,
        kind: JointKind,
        axis: Unit<Vector3<f64>>,
    ) -> Result<usize, ModelError> {
        if self.frames.contains_key(name) || self.joint_index(name).is_some() {
            return Err(ModelError::DuplicateName(name.to_string()));
        }
        let parent = self.frame(parent_frame)?;
        self.joints.push(Joint {
            name: name.to_string(),
            kind,
            parent: parent.body,
            origin: parent.offset * origin,
            axis,
            limits: None,
            child_link: name.to_string(),
            inertia: BodyInertia::zero(),
        });
        let index = self.joints.len() - 1;
        self.frames.insert(
            name.to_string(),
            Frame {
                body: Some(index),
                offset: Isometry3::identity(),
            },
        );
        Ok(index)
    }

    /// Overwrite the mass properties of a body.
    pub fn set_body_inertia(&mut self, index: usize, inertia: BodyInertia) {
        self.joints[index].inertia = inertia;
    }

    /// Joints on the path from the root to `body`, deepest first.
    pub fn support(&self, body: Option<usize>) -> SupportIter<'_> {
        SupportIter { tree: self, cur: body }
    }

    /// Canonical plain-text summary; stable under re-parsing.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "root {}", self.root);
        let _ = writeln!(s, "dof {}", self.dof());
        for (i, j) in self.joints.iter().enumerate() {
            let kind = match j.kind {
                JointKind::Revolute => "revolute",
                JointKind::Prismatic => "prismatic",
            };
            let a = j.axis.into_inner();
            let _ = write!(
                s,
                "joint {i} {} {kind} parent={} axis=({:.12e},{:.12e},{:.12e})",
                j.name,
                j.parent.map_or("root".to_string(), |p| p.to_string()),
                a.x,
                a.y,
                a.z
            );
            if let Some((lo, hi)) = j.limits {
                let _ = write!(s, " limits=({lo:.12e},{hi:.12e})");
            }
            let t = j.origin.translation.vector;
            let q = j.origin.rotation;
            let _ = writeln!(
                s,
                " origin=({:.12e},{:.12e},{:.12e};{:.12e},{:.12e},{:.12e},{:.12e}) mass={:.12e} com=({:.12e},{:.12e},{:.12e})",
                t.x, t.y, t.z, q.w, q.i, q.j, q.k, j.inertia.mass, j.inertia.com.x, j.inertia.com.y, j.inertia.com.z
            );
        }
        for (name, f) in &self.frames {
            let t = f.offset.translation.vector;
            let _ = writeln!(
                s,
                "frame {name} body={} at=({:.12e},{:.12e},{:.12e})",
                f.body.map_or("root".to_string(), |b| b.to_string()),
                t.x,
                t.y,
                t.z
            );
        }
        s
    }
}

pub struct SupportIter<'a> {
    tree: &'a KinematicTree,
    cur: Option<usize>,
}

impl Iterator for SupportIter<'_> {
    type Item = usize;
    fn next(&mut self) -> Option<usize> {
        let c = self.cur?;
        self.cur = self.tree.joints[c].parent;
        Some(c)
    }
}

/// Validate URDF inertial data: symmetric PSD and, for positive mass, the
/// triangle inequality on principal moments.
pub fn check_inertia(name: &str, mass: f64, inertia: &Matrix3<f64>) -> Result<(), ModelError> {
    let bad = |why: &str| ModelError::InvalidInertia {
        link: name.to_string(),
        reason: why.to_string(),
    };
    if !(mass >= 0.0) || !mass.is_finite() {
        return Err(bad("mass must be finite and non-negative"));
    }
    if (inertia - inertia.transpose()).abs().max() > 1e-12 {
        return Err(bad("inertia tensor not symmetric"));
    }
    let eig = inertia.symmetric_eigenvalues();
    let scale = eig.amax().max(1e-300);
    if eig.min() < -1e-9 * scale {
        return Err(bad("inertia tensor not positive semidefinite"));
    }
    if mass > 0.0 {
        let (a, b, c) = (eig[0], eig[1], eig[2]);
        let tol = 1e-9 * scale;
        if a + b < c - tol || a + c < b - tol || b + c < a - tol {
            return Err(bad("principal moments violate the triangle inequality"));
        }
    }
    Ok(())
}
