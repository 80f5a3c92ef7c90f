//! Reference trajectories for the end-effector spring.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::opspace::ReferenceSample;

/// The figure-eight used in the experiments: periods of 5 s in x and 10 s in z.
pub fn eight_curve(t: f64) -> ReferenceSample {
    let (wx, wz) = (2.0 * PI / 5.0, 2.0 * PI / 10.0);
    ReferenceSample {
        position: Vector3::new(0.45 + 0.05 * (wx * t).sin(), 0.0, 0.15 + 0.025 * (wz * t).sin()),
        velocity: Vector3::new(0.05 * wx * (wx * t).cos(), 0.0, 0.025 * wz * (wz * t).cos()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    EightCurve,
    Hold(Vector3<f64>),
}

impl Reference {
    pub fn sample(&self, t: f64) -> ReferenceSample {
        match self {
            Reference::EightCurve => eight_curve(t),
            Reference::Hold(p) => ReferenceSample::fixed(*p),
        }
    }

    /// Preset by name: `eight_curve`, or `hold` at the given point.
    pub fn preset(name: &str, hold_at: Vector3<f64>) -> Option<Reference> {
        match name {
            "eight_curve" | "eightcurve" => Some(Reference::EightCurve),
            "hold" => Some(Reference::Hold(hold_at)),
            _ => None,
        }
    }
}
