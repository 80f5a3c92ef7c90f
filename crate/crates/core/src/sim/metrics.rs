//! Trace post-processing: task errors, energy audit and CSV output.

use std::io::{self, Write};

use nalgebra::{DVector, Vector3};

use crate::dynamics::Kinematics;
use crate::error::SimError;
use crate::model::KinematicTree;
use crate::sim::SimTrace;
use crate::urdf::{INSTRUMENT_BASE, INSTRUMENT_TIP};

/// Distance from `rcm` to the infinite line through the instrument base and tip.
pub fn axis_rcm_distance(tree: &KinematicTree, q: &DVector<f64>, rcm: &Vector3<f64>) -> Result<f64, SimError> {
    let kin = Kinematics::new(tree, q)?;
    let base = kin.pose_of(&tree.frame(INSTRUMENT_BASE)?).translation.vector;
    let tip = kin.pose_of(&tree.frame(INSTRUMENT_TIP)?).translation.vector;
    line_distance(&base, &tip, rcm)
}

pub(crate) fn line_distance(a: &Vector3<f64>, b: &Vector3<f64>, p: &Vector3<f64>) -> Result<f64, SimError> {
    let axis = b - a;
    let len = axis.norm();
    if !(len > 1e-12) {
        return Err(SimError::DegenerateAxis);
    }
    let axis = axis / len;
    let d = p - a;
    Ok((d - axis * d.dot(&axis)).norm())
}

/// max over t of E(t) − E(0) − ∫ port power. Positive values beyond the
/// integration tolerance indicate energy created by the controller.
pub fn passivity_audit(trace: &SimTrace) -> f64 {
    let Some(first) = trace.samples.first() else { return 0.0 };
    trace
        .samples
        .iter()
        .map(|s| s.energy - first.energy - (s.work - first.work))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// max over t of |E(t) − E(0) − ∫ port power + ∫ damper power|: zero for the
/// exact solution, so it measures integration error alone.
pub fn energy_balance_error(trace: &SimTrace) -> f64 {
    let Some(first) = trace.samples.first() else { return 0.0 };
    trace
        .samples
        .iter()
        .map(|s| (s.energy - first.energy - (s.work - first.work) + (s.dissipated - first.dissipated)).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub max_ee_err: f64,
    pub rms_ee_err: f64,
    pub max_rcm_dist: f64,
    pub rms_rcm_dist: f64,
    /// Peak |u − g| over joints and time.
    pub peak_torque: f64,
    /// RMS of the finite-difference rate of u − g (N·m/s), a bandwidth proxy.
    pub torque_rate_rms: f64,
}

impl Metrics {
    pub fn entries(&self) -> [(&'static str, f64); 6] {
        [
            ("max_ee_err", self.max_ee_err),
            ("rms_ee_err", self.rms_ee_err),
            ("max_rcm_dist", self.max_rcm_dist),
            ("rms_rcm_dist", self.rms_rcm_dist),
            ("peak_torque", self.peak_torque),
            ("torque_rate_rms", self.torque_rate_rms),
        ]
    }
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

pub fn metrics(trace: &SimTrace) -> Result<Metrics, SimError> {
    let s = &trace.samples;
    if s.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    let max = |f: &dyn Fn(usize) -> f64| (0..s.len()).map(f).fold(0.0, f64::max);
    let rate = rms(s.windows(2).flat_map(|w| {
        let dt = w[1].t - w[0].t;
        w[1].u_nog.iter().zip(w[0].u_nog.iter()).map(move |(b, a)| (b - a) / dt)
    }));
    Ok(Metrics {
        max_ee_err: max(&|i| s[i].ee_err),
        rms_ee_err: rms(s.iter().map(|x| x.ee_err)),
        max_rcm_dist: max(&|i| s[i].rcm_dist),
        rms_rcm_dist: rms(s.iter().map(|x| x.rcm_dist)),
        peak_torque: max(&|i| s[i].u_nog.amax()),
        torque_rate_rms: rate,
    })
}

/// Joints whose recorded position left the URDF limits: (name, largest excess in rad or m).
pub fn limit_violations(tree: &KinematicTree, trace: &SimTrace) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (i, j) in tree.joints().iter().enumerate().take(trace.robot_dof) {
        let Some((lo, hi)) = j.limits else { continue };
        let excess = trace
            .samples
            .iter()
            .map(|s| (lo - s.qe[i]).max(s.qe[i] - hi))
            .fold(0.0, f64::max);
        if excess > 0.0 {
            out.push((j.name.clone(), excess));
        }
    }
    out
}

/// `t, q_1..q_ne, qd_1..qd_ne, u_1..u_n, u_nog_1..u_nog_n, ee_err, rcm_dist, energy, port_power`.
/// Numbers use shortest round-trip formatting, so identical traces give identical bytes.
pub fn write_csv(trace: &SimTrace, out: &mut impl Write) -> io::Result<()> {
    let Some(first) = trace.samples.first() else {
        return Ok(());
    };
    let (ne, n) = (first.qe.len(), trace.robot_dof);
    let mut header = vec!["t".to_string()];
    header.extend((1..=ne).map(|i| format!("q_{i}")));
    header.extend((1..=ne).map(|i| format!("qd_{i}")));
    header.extend((1..=n).map(|i| format!("u_{i}")));
    header.extend((1..=n).map(|i| format!("u_nog_{i}")));
    header.extend(["ee_err", "rcm_dist", "energy", "port_power"].map(String::from));
    writeln!(out, "{}", header.join(","))?;
    let mut line = String::new();
    for s in &trace.samples {
        line.clear();
        let fields = std::iter::once(s.t)
            .chain(s.qe.iter().copied())
            .chain(s.qde.iter().copied())
            .chain(s.u.iter().copied())
            .chain(s.u_nog.iter().copied())
            .chain([s.ee_err, s.rcm_dist, s.energy, s.port_power]);
        for (i, v) in fields.enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::TraceSample;

    fn synthetic(err: impl Fn(f64) -> f64, n: usize, dt: f64) -> SimTrace {
        SimTrace {
            robot_dof: 1,
            samples: (0..n)
                .map(|i| {
                    let t = i as f64 * dt;
                    TraceSample {
                        t,
                        qe: DVector::zeros(1),
                        qde: DVector::zeros(1),
                        u: DVector::zeros(1),
                        u_nog: DVector::zeros(1),
                        ee_err: err(t),
                        rcm_dist: err(t),
                        energy: 0.0,
                        port_power: 0.0,
                        work: 0.0,
                        dissipated: 0.0,
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn line_distance_three_four_five() {
        let d = line_distance(&Vector3::zeros(), &Vector3::z(), &Vector3::new(0.3, 0.4, 7.0)).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
        assert!(line_distance(&Vector3::zeros(), &Vector3::new(0.0, 0.0, 2.0), &Vector3::new(0.0, 0.0, -3.0)).unwrap() < 1e-15);
        assert!(matches!(line_distance(&Vector3::x(), &Vector3::x(), &Vector3::zeros()), Err(SimError::DegenerateAxis)));
    }

    #[test]
    fn error_statistics() {
        let zero = metrics(&synthetic(|_| 0.0, 10, 0.1)).unwrap();
        assert_eq!((zero.max_ee_err, zero.rms_ee_err, zero.max_rcm_dist), (0.0, 0.0, 0.0));
        let c = metrics(&synthetic(|_| 0.25, 10, 0.1)).unwrap();
        assert!((c.rms_ee_err - 0.25).abs() < 1e-15 && c.max_ee_err == 0.25);
        // whole periods, endpoint excluded
        let a = 0.3;
        let s = metrics(&synthetic(|t| a * (2.0 * std::f64::consts::PI * t).sin(), 1000, 1e-3)).unwrap();
        assert!((s.rms_ee_err - a / 2f64.sqrt()).abs() < 1e-9);
        assert!(matches!(metrics(&SimTrace { robot_dof: 1, samples: vec![] }), Err(SimError::EmptyTrace)));
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        write_csv(&synthetic(|_| 0.0, 2, 0.5), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,q_1,qd_1,u_1,u_nog_1,ee_err,rcm_dist,energy,port_power");
        assert_eq!(text.lines().nth(2).unwrap(), "0.5,0,0,0,0,0,0,0,0");
    }
}
