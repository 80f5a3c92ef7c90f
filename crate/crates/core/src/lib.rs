//! Passive virtual-mechanism controllers for serial robots, with the two
//! remote-centre-of-motion mechanisms used in robotic keyhole surgery.

pub mod dynamics;
pub mod error;
pub mod mechanisms;
pub mod model;
pub mod opspace;
pub mod sim;
pub mod synthesis;
pub mod urdf;

pub use error::{MechanismError, ModelError, SimError, SynthesisError};
pub use model::{BodyInertia, Frame, Joint, JointKind, KinematicTree};
