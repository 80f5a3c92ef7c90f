//! URDF ingest for the subset needed by the dynamics: links with
//! `<inertial>`, and revolute / continuous / prismatic / fixed joints.
//! Visual and collision geometry is ignored.

use nalgebra::{Isometry3, Matrix3, Translation3, Unit, UnitQuaternion, Vector3};
use roxmltree::{Document, Node};

use crate::error::ModelError;
use crate::model::{check_inertia, BodyInertia, KinematicTree, UrdfJoint, UrdfJointType, UrdfLink};

/// Frame names defined by [`attach_instrument`].
pub const INSTRUMENT_BASE: &str = "instrument_base";
pub const INSTRUMENT_TIP: &str = "instrument_tip";
pub const INSTRUMENT_CENTER: &str = "instrument_center";

pub fn parse_urdf(text: &str) -> Result<KinematicTree, ModelError> {
    let doc = Document::parse(text).map_err(|e| {
        let pos = e.pos();
        ModelError::MalformedXml {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })?;
    let robot = doc.root_element();
    if robot.tag_name().name() != "robot" {
        return Err(ModelError::InvalidValue {
            line: line_of(&doc, robot),
            message: format!("expected <robot> root element, found <{}>", robot.tag_name().name()),
        });
    }

    let mut links = Vec::new();
    let mut joints = Vec::new();
    for node in robot.children().filter(Node::is_element) {
        match node.tag_name().name() {
            "link" => links.push(parse_link(&doc, node)?),
            "joint" => joints.push(parse_joint(&doc, node)?),
            _ => {}
        }
    }
    KinematicTree::from_parts(links, joints)
}

fn line_of(doc: &Document, node: Node) -> u32 {
    doc.text_pos_at(node.range().start).row
}

fn required<'a>(doc: &Document, node: Node<'a, '_>, attr: &str) -> Result<&'a str, ModelError> {
    node.attribute(attr).ok_or_else(|| ModelError::InvalidValue {
        line: line_of(doc, node),
        message: format!("<{}> is missing attribute '{attr}'", node.tag_name().name()),
    })
}

fn child<'a, 'i>(node: Node<'a, 'i>, tag: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.is_element() && c.tag_name().name() == tag)
}

fn parse_number(doc: &Document, node: Node, text: &str) -> Result<f64, ModelError> {
    text.trim().parse::<f64>().map_err(|_| ModelError::InvalidValue {
        line: line_of(doc, node),
        message: format!("'{text}' is not a number"),
    })
}

fn parse_vec3(doc: &Document, node: Node, text: &str) -> Result<Vector3<f64>, ModelError> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(ModelError::InvalidValue {
            line: line_of(doc, node),
            message: format!("expected three numbers, found '{text}'"),
        });
    }
    let mut v = Vector3::zeros();
    for (i, p) in parts.iter().enumerate() {
        v[i] = parse_number(doc, node, p)?;
    }
    Ok(v)
}

fn parse_origin(doc: &Document, parent: Node) -> Result<Isometry3<f64>, ModelError> {
    let Some(origin) = child(parent, "origin") else {
        return Ok(Isometry3::identity());
    };
    let xyz = match origin.attribute("xyz") {
        Some(t) => parse_vec3(doc, origin, t)?,
        None => Vector3::zeros(),
    };
    let rpy = match origin.attribute("rpy") {
        Some(t) => parse_vec3(doc, origin, t)?,
        None => Vector3::zeros(),
    };
    Ok(Isometry3::from_parts(
        Translation3::from(xyz),
        UnitQuaternion::from_euler_angles(rpy.x, rpy.y, rpy.z),
    ))
}

fn parse_link(doc: &Document, node: Node) -> Result<UrdfLink, ModelError> {
    let name = required(doc, node, "name")?.to_string();
    let Some(inertial) = child(node, "inertial") else {
        return Ok(UrdfLink::massless(name));
    };
    let frame = parse_origin(doc, inertial)?;
    let mass = match child(inertial, "mass") {
        Some(m) => parse_number(doc, m, required(doc, m, "value")?)?,
        None => 0.0,
    };
    let mut inertia = Matrix3::zeros();
    if let Some(i) = child(inertial, "inertia") {
        let get = |a: &str| -> Result<f64, ModelError> {
            match i.attribute(a) {
                Some(t) => parse_number(doc, i, t),
                None => Ok(0.0),
            }
        };
        let (ixx, ixy, ixz, iyy, iyz, izz) =
            (get("ixx")?, get("ixy")?, get("ixz")?, get("iyy")?, get("iyz")?, get("izz")?);
        inertia = Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz);
    }
    check_inertia(&name, mass, &inertia)?;
    let r = frame.rotation.to_rotation_matrix();
    Ok(UrdfLink {
        name,
        mass,
        com: frame.translation.vector,
        inertia: r.matrix() * inertia * r.matrix().transpose(),
        has_inertial: true,
    })
}

fn parse_joint(doc: &Document, node: Node) -> Result<UrdfJoint, ModelError> {
    let name = required(doc, node, "name")?.to_string();
    let kind = required(doc, node, "type")?;
    let joint_type = match kind {
        "revolute" => UrdfJointType::Revolute,
        "continuous" => UrdfJointType::Continuous,
        "prismatic" => UrdfJointType::Prismatic,
        "fixed" => UrdfJointType::Fixed,
        other => {
            return Err(ModelError::UnsupportedJointType {
                name,
                kind: other.to_string(),
                line: line_of(doc, node),
            })
        }
    };
    let link_ref = |tag: &str| -> Result<String, ModelError> {
        let c = child(node, tag).ok_or_else(|| ModelError::InvalidValue {
            line: line_of(doc, node),
            message: format!("joint '{name}' has no <{tag}>"),
        })?;
        Ok(required(doc, c, "link")?.to_string())
    };
    let parent = link_ref("parent")?;
    let child_link = link_ref("child")?;
    let origin = parse_origin(doc, node)?;
    let axis = match child(node, "axis") {
        Some(a) => {
            let v = parse_vec3(doc, a, required(doc, a, "xyz")?)?;
            Unit::try_new(v, 1e-12).ok_or_else(|| ModelError::InvalidValue {
                line: line_of(doc, a),
                message: format!("joint '{name}' has a zero axis"),
            })?
        }
        None => Vector3::x_axis(),
    };
    let limits = match child(node, "limit") {
        Some(l) if l.attribute("lower").is_some() || l.attribute("upper").is_some() => {
            let lo = l.attribute("lower").map_or(Ok(0.0), |t| parse_number(doc, l, t))?;
            let hi = l.attribute("upper").map_or(Ok(0.0), |t| parse_number(doc, l, t))?;
            Some((lo, hi))
        }
        _ => None,
    };
    Ok(UrdfJoint {
        name,
        joint_type,
        parent,
        child: child_link,
        origin,
        axis,
        limits,
    })
}

/// Weld a straight instrument to `parent_frame`. The instrument runs along the
/// local z axis of `offset` for `length` metres; its mass is a thin uniform rod.
/// Defines the `instrument_base`, `instrument_center` and `instrument_tip` frames.
pub fn attach_instrument(
    mut tree: KinematicTree,
    parent_frame: &str,
    offset: Isometry3<f64>,
    length: f64,
    mass: f64,
) -> Result<KinematicTree, ModelError> {
    tree.frame(parent_frame)?;
    if !(length >= 0.0) || !(mass >= 0.0) {
        return Err(ModelError::InvalidValue {
            line: 0,
            message: "instrument length and mass must be non-negative".into(),
        });
    }
    tree.add_frame(INSTRUMENT_BASE, parent_frame, offset)?;
    let along = |s: f64| Isometry3::translation(0.0, 0.0, s);
    tree.add_frame(INSTRUMENT_CENTER, INSTRUMENT_BASE, along(0.5 * length))?;
    tree.add_frame(INSTRUMENT_TIP, INSTRUMENT_BASE, along(length))?;
    let rod = mass * length * length / 12.0;
    tree.add_mass(
        INSTRUMENT_CENTER,
        &BodyInertia {
            mass,
            com: Vector3::zeros(),
            inertia: Matrix3::from_diagonal(&Vector3::new(rod, rod, 0.0)),
        },
    )?;
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SINGLE: &str = r#"<robot name="r"><link name="base">
        <inertial><mass value="1"/><inertia ixx="1" iyy="1" izz="1"/></inertial></link></robot>"#;

    #[test]
    fn single_link_has_no_dof() {
        let t = parse_urdf(SINGLE).unwrap();
        assert_eq!(t.dof(), 0);
        assert_eq!(t.links().len(), 1);
    }

    #[test]
    fn malformed_xml_reports_position() {
        let err = parse_urdf("<robot><link name='a'></robot>").unwrap_err();
        assert!(matches!(err, ModelError::MalformedXml { line: 1, .. }), "{err:?}");
    }

    #[test]
    fn rejects_planar_and_floating() {
        for kind in ["planar", "floating"] {
            let text = format!(
                r#"<robot name="r"><link name="a"/><link name="b"><inertial><mass value="1"/></inertial></link>
                <joint name="j" type="{kind}"><parent link="a"/><child link="b"/></joint></robot>"#
            );
            let err = parse_urdf(&text).unwrap_err();
            assert!(matches!(err, ModelError::UnsupportedJointType { line: 2, .. }), "{err:?}");
        }
    }

    #[test]
    fn movable_link_without_inertial_is_rejected() {
        let text = r#"<robot name="r"><link name="a"/><link name="b"/>
            <joint name="j" type="revolute"><parent link="a"/><child link="b"/><axis xyz="0 0 1"/></joint></robot>"#;
        assert_eq!(parse_urdf(text).unwrap_err(), ModelError::MissingInertial("b".into()));
    }

    #[test]
    fn cycles_and_multiple_roots_are_rejected() {
        let body = r#"<inertial><mass value="1"/><inertia ixx="1" iyy="1" izz="1"/></inertial>"#;
        let cyclic = format!(
            r#"<robot name="r"><link name="r0"/><link name="a">{body}</link><link name="b">{body}</link>
            <joint name="j1" type="revolute"><parent link="a"/><child link="b"/></joint>
            <joint name="j2" type="revolute"><parent link="b"/><child link="a"/></joint></robot>"#
        );
        assert!(matches!(parse_urdf(&cyclic), Err(ModelError::CyclicGraph(_))));
        let two_roots = r#"<robot name="r"><link name="a"/><link name="b"/></robot>"#;
        assert!(matches!(parse_urdf(two_roots), Err(ModelError::MultipleRoots(_))));
    }

    #[test]
    fn bad_inertia_is_rejected() {
        let text = r#"<robot name="r"><link name="a"><inertial><mass value="1"/>
            <inertia ixx="1" iyy="1" izz="5"/></inertial></link></robot>"#;
        assert!(matches!(parse_urdf(text), Err(ModelError::InvalidInertia { .. })));
    }

    #[test]
    fn axes_are_normalized_and_continuous_is_unlimited() {
        let text = r#"<robot name="r"><link name="a"/><link name="b"><inertial><mass value="1"/>
            <inertia ixx="1" iyy="1" izz="1"/></inertial></link>
            <joint name="j" type="continuous"><parent link="a"/><child link="b"/><axis xyz="0 3 4"/>
            <limit lower="-1" upper="1"/></joint></robot>"#;
        let t = parse_urdf(text).unwrap();
        let j = t.joint(0);
        assert!((j.axis.norm() - 1.0).abs() < 1e-12);
        assert!((j.axis.y - 0.6).abs() < 1e-15);
        assert_eq!(j.limits, None);
    }

    #[test]
    fn fixed_children_fold_into_parent_body() {
        let text = r#"<robot name="r"><link name="a"/>
            <link name="b"><inertial><mass value="1"/><inertia ixx="0.1" iyy="0.1" izz="0.1"/></inertial></link>
            <link name="c"><inertial><origin xyz="0 0 0.5"/><mass value="1"/><inertia ixx="0.1" iyy="0.1" izz="0.1"/></inertial></link>
            <joint name="j" type="prismatic"><parent link="a"/><child link="b"/><axis xyz="0 0 1"/></joint>
            <joint name="w" type="fixed"><parent link="b"/><child link="c"/><origin xyz="1 0 0"/></joint></robot>"#;
        let t = parse_urdf(text).unwrap();
        assert_eq!(t.dof(), 1);
        let b = &t.joint(0).inertia;
        assert_eq!(b.mass, 2.0);
        assert!((b.com - Vector3::new(0.5, 0.0, 0.25)).norm() < 1e-15);
        let f = t.frame("c").unwrap();
        assert_eq!(f.body, Some(0));
        assert!((f.offset.translation.vector - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn unknown_parent_frame_for_instrument() {
        let t = parse_urdf(SINGLE).unwrap();
        let err = attach_instrument(t, "nope", Isometry3::identity(), 0.1, 0.0).unwrap_err();
        assert_eq!(err, ModelError::UnknownFrame("nope".into()));
    }
}
