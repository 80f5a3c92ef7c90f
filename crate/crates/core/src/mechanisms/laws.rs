//! One-port component laws: springs, dampers and inerters.

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpringLaw {
    Linear { k: f64 },
    /// Zero force for |z| ≤ half_width, linear with slope `k_outer` outside.
    Deadzone { k_outer: f64, half_width: f64 },
}

impl SpringLaw {
    pub fn force(&self, z: f64) -> f64 {
        match *self {
            SpringLaw::Linear { k } => k * z,
            SpringLaw::Deadzone { k_outer, half_width } => {
                if z > half_width {
                    k_outer * (z - half_width)
                } else if z < -half_width {
                    k_outer * (z + half_width)
                } else {
                    0.0
                }
            }
        }
    }

    /// Stored energy, zero at z = 0 and never negative for k ≥ 0.
    pub fn energy(&self, z: f64) -> f64 {
        match *self {
            SpringLaw::Linear { k } => 0.5 * k * z * z,
            SpringLaw::Deadzone { k_outer, half_width } => {
                let e = (z.abs() - half_width).max(0.0);
                0.5 * k_outer * e * e
            }
        }
    }

    pub fn stiffness(&self) -> f64 {
        match *self {
            SpringLaw::Linear { k } => k,
            SpringLaw::Deadzone { k_outer, .. } => k_outer,
        }
    }

    /// Same law shape with a new slope.
    pub fn with_stiffness(&self, k: f64) -> SpringLaw {
        match *self {
            SpringLaw::Linear { .. } => SpringLaw::Linear { k },
            SpringLaw::Deadzone { half_width, .. } => SpringLaw::Deadzone { k_outer: k, half_width },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DamperLaw {
    Linear { c: f64 },
}

impl DamperLaw {
    pub fn force(&self, zdot: f64) -> f64 {
        match *self {
            DamperLaw::Linear { c } => c * zdot,
        }
    }

    pub fn damping(&self) -> f64 {
        match *self {
            DamperLaw::Linear { c } => c,
        }
    }
}

/// Ideal inerter, F = m z̈.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inerter {
    pub inertance: f64,
}

impl Inerter {
    pub fn new(inertance: f64) -> Option<Self> {
        (inertance > 0.0 && inertance.is_finite()).then_some(Self { inertance })
    }

    pub fn force(&self, zddot: f64) -> f64 {
        self.inertance * zddot
    }

    pub fn energy(&self, zdot: f64) -> f64 {
        0.5 * self.inertance * zdot * zdot
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deadzone_values() {
        let s = SpringLaw::Deadzone { k_outer: 400.0, half_width: 0.015 };
        assert_eq!(s.force(0.01), 0.0);
        assert!((s.force(0.02) - 400.0 * 0.005).abs() < 1e-12);
        assert!((s.force(-0.02) + 400.0 * 0.005).abs() < 1e-12);
        assert!((s.energy(0.015 + 0.004) - 0.5 * 400.0 * 0.004 * 0.004).abs() < 1e-15);
        assert_eq!(s.energy(0.015), 0.0);
    }

    #[test]
    fn zero_width_deadzone_is_linear() {
        let d = SpringLaw::Deadzone { k_outer: 7.0, half_width: 0.0 };
        let l = SpringLaw::Linear { k: 7.0 };
        for z in [-1.0, -0.2, 0.0, 0.3, 2.0] {
            assert_eq!(d.force(z), l.force(z));
            assert!((d.energy(z) - l.energy(z)).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_energy_is_half_k_z_squared() {
        assert_eq!(SpringLaw::Linear { k: 4.0 }.energy(0.5), 0.5);
    }

    #[test]
    fn inerter_requires_positive_inertance() {
        assert!(Inerter::new(0.0).is_none());
        assert!(Inerter::new(-1.0).is_none());
        assert_eq!(Inerter::new(0.1).unwrap().force(2.0), 0.2);
    }
}
