//! Imitation, task and regularization metrics with per-phase scales.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motiondata::MotionClip;

/// Inputs for one control tick; any field may be missing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricFrame {
    pub q_ref: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
    pub qdot_ref: Option<Vec<f64>>,
    pub qdot: Option<Vec<f64>>,
    pub tau: Option<Vec<f64>>,
    pub qddot: Option<Vec<f64>>,
    /// Joint targets of the previous and current tick.
    pub target_prev: Option<Vec<f64>>,
    pub target: Option<Vec<f64>>,
    pub collisions: Option<u32>,
    /// Head pitch/yaw.
    pub head_ref: Option<Vec<f64>>,
    pub head: Option<Vec<f64>>,
    /// Base yaw rate.
    pub base_rate_ref: Option<f64>,
    pub base_rate: Option<f64>,
    /// Horizontal foot velocities, flattened.
    pub foot_velocity: Option<Vec<f64>>,
    /// Per-foot air time, seconds.
    pub foot_air_time: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    JointImitation,
    BaseAngularVelocity,
    EndEffectorOrientation,
    JointTorque,
    JointAcceleration,
    TargetDifference,
    SelfCollisions,
    FootSlippage,
    FootAirTime,
}

impl MetricName {
    pub const ALL: [MetricName; 9] = [
        MetricName::JointImitation,
        MetricName::BaseAngularVelocity,
        MetricName::EndEffectorOrientation,
        MetricName::JointTorque,
        MetricName::JointAcceleration,
        MetricName::TargetDifference,
        MetricName::SelfCollisions,
        MetricName::FootSlippage,
        MetricName::FootAirTime,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::JointImitation => "joint_imitation",
            MetricName::BaseAngularVelocity => "base_angular_velocity",
            MetricName::EndEffectorOrientation => "end_effector_orientation",
            MetricName::JointTorque => "joint_torque",
            MetricName::JointAcceleration => "joint_acceleration",
            MetricName::TargetDifference => "target_difference",
            MetricName::SelfCollisions => "self_collisions",
            MetricName::FootSlippage => "foot_slippage",
            MetricName::FootAirTime => "foot_air_time",
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Training phase selecting a column of reward scales.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    DanceImitation,
    Locomotion,
    Gaze,
}

impl Phase {
    /// Scale applied to a raw metric; `None` where the metric is not part of the phase.
    pub fn scale(self, m: MetricName) -> Option<f64> {
        use MetricName::*;
        let col = match m {
            JointImitation => [Some(1.0), Some(1.0), Some(1.0)],
            BaseAngularVelocity => [Some(0.0), Some(1.0), None],
            EndEffectorOrientation => [Some(0.0), None, Some(0.7)],
            JointTorque => [Some(-0.001); 3],
            JointAcceleration => [Some(-2e-7); 3],
            TargetDifference => [Some(-0.01); 3],
            SelfCollisions => [Some(-10.0); 3],
            FootSlippage => [Some(0.0), Some(-0.15), None],
            FootAirTime => [Some(0.0), Some(2.0), None],
        };
        col[self as usize]
    }
}

/// Raw metric values and their scaled contributions; `None` marks a metric
/// whose inputs were missing (or, for `scaled`, that the phase omits).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardReport {
    pub raw: BTreeMap<MetricName, Option<f64>>,
    pub scaled: BTreeMap<MetricName, Option<f64>>,
}

impl RewardReport {
    /// Sum of the available scaled contributions.
    pub fn total(&self) -> f64 {
        self.scaled.values().flatten().sum()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> Option<f64> {
    (a.len() == b.len()).then(|| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

fn raw_metric(frame: &MetricFrame, m: MetricName) -> Option<f64> {
    use MetricName::*;
    match m {
        JointImitation => sq_dist(frame.q_ref.as_deref()?, frame.q.as_deref()?).map(|e| (-e).exp()),
        BaseAngularVelocity => {
            let e = frame.base_rate_ref? - frame.base_rate?;
            Some((-e * e / 0.06).exp())
        }
        EndEffectorOrientation => {
            sq_dist(frame.head_ref.as_deref()?, frame.head.as_deref()?).map(|e| (-4.0 * e).exp())
        }
        JointTorque => frame.tau.as_deref().map(sq_norm),
        JointAcceleration => frame.qddot.as_deref().map(sq_norm),
        TargetDifference => sq_dist(frame.target_prev.as_deref()?, frame.target.as_deref()?),
        SelfCollisions => frame.collisions.map(f64::from),
        FootSlippage => frame.foot_velocity.as_deref().map(sq_norm),
        FootAirTime => frame
            .foot_air_time
            .as_ref()
            .map(|t| t.iter().map(|t| t - 0.2).sum()),
    }
}

/// Evaluates every metric on `frame` and scales it by the `phase` column.
///
/// Raw penalty terms are the non-negative quantities (`‖τ‖²`, `n_c`, …); their
/// negative scales make the contributions penalties.
pub fn rewards(frame: &MetricFrame, phase: Phase) -> RewardReport {
    let mut raw = BTreeMap::new();
    let mut scaled = BTreeMap::new();
    for m in MetricName::ALL {
        let r = raw_metric(frame, m);
        raw.insert(m, r);
        scaled.insert(m, r.zip(phase.scale(m)).map(|(r, s)| r * s));
    }
    RewardReport { raw, scaled }
}

/// Mean absolute joint error over all joints and frames, radians.
pub fn mae(reference: &MotionClip, measured: &MotionClip) -> Result<f64> {
    if reference.states.shape() != measured.states.shape()
        || (reference.dt - measured.dt).abs() > 1e-12
    {
        return Err(Error::invalid(format!(
            "clip shapes differ: {:?} at dt {} vs {:?} at dt {}",
            reference.states.shape(),
            reference.dt,
            measured.states.shape(),
            measured.dt
        )));
    }
    let n = reference.states.as_slice().len();
    if n == 0 {
        return Err(Error::invalid("mean error of empty clips"));
    }
    let sum: f64 = reference
        .states
        .as_slice()
        .iter()
        .zip(measured.states.as_slice())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use proptest::prelude::*;

    fn clip(values: Vec<f64>, frames: usize) -> MotionClip {
        let rows = values.len() / frames;
        MotionClip {
            name: "c".into(),
            base_motion_id: "c".into(),
            freq_factor: 1.0,
            dt: 0.01,
            n_joints: rows,
            with_velocities: false,
            states: Matrix::from_vec(rows, frames, values),
            events: vec![],
        }
    }

    #[test]
    fn imitation_is_one_at_perfect_tracking() {
        let f = MetricFrame {
            q_ref: Some(vec![0.1, 0.2]),
            q: Some(vec![0.1, 0.2]),
            ..Default::default()
        };
        let r = rewards(&f, Phase::DanceImitation);
        assert_eq!(r.raw[&MetricName::JointImitation], Some(1.0));
        assert_eq!(r.raw[&MetricName::JointTorque], None);
    }

    #[test]
    fn angular_velocity_coefficient() {
        let f = MetricFrame {
            base_rate_ref: Some(0.06f64.sqrt()),
            base_rate: Some(0.0),
            ..Default::default()
        };
        let v = rewards(&f, Phase::Locomotion).raw[&MetricName::BaseAngularVelocity].unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-12);
        assert!((v - 0.3679).abs() < 1e-4);
        assert_eq!(
            rewards(&f, Phase::Gaze).scaled[&MetricName::BaseAngularVelocity],
            None
        );
    }

    #[test]
    fn collision_penalty_scale() {
        let f = MetricFrame {
            collisions: Some(2),
            ..Default::default()
        };
        assert_eq!(
            rewards(&f, Phase::DanceImitation).scaled[&MetricName::SelfCollisions],
            Some(-20.0)
        );
    }

    #[test]
    fn remaining_formulas() {
        let f = MetricFrame {
            head_ref: Some(vec![0.5, 0.0]),
            head: Some(vec![0.0, 0.0]),
            tau: Some(vec![3.0, 4.0]),
            qddot: Some(vec![100.0]),
            target_prev: Some(vec![0.0, 1.0]),
            target: Some(vec![0.1, 1.0]),
            foot_velocity: Some(vec![0.3, 0.4]),
            foot_air_time: Some(vec![0.5, 0.1]),
            ..Default::default()
        };
        let r = rewards(&f, Phase::Locomotion);
        let g = rewards(&f, Phase::Gaze);
        assert!(
            (g.raw[&MetricName::EndEffectorOrientation].unwrap() - (-1.0f64).exp()).abs() < 1e-12
        );
        assert!(
            (g.scaled[&MetricName::EndEffectorOrientation].unwrap() - 0.7 * (-1.0f64).exp()).abs()
                < 1e-12
        );
        assert_eq!(r.scaled[&MetricName::JointTorque], Some(-0.025));
        assert!((r.scaled[&MetricName::JointAcceleration].unwrap() + 2e-3).abs() < 1e-15);
        assert!((r.scaled[&MetricName::TargetDifference].unwrap() + 1e-4).abs() < 1e-15);
        assert!((r.scaled[&MetricName::FootSlippage].unwrap() + 0.15 * 0.25).abs() < 1e-15);
        assert!((r.scaled[&MetricName::FootAirTime].unwrap() - 2.0 * 0.2).abs() < 1e-12);
        assert_eq!(g.scaled[&MetricName::FootAirTime], None);
    }

    #[test]
    fn mae_examples() {
        let a = clip(vec![0.0, 1.0, 2.0, 3.0], 2);
        let b = clip(vec![0.1, 1.1, 2.1, 3.1], 2);
        assert_eq!(mae(&a, &a).unwrap(), 0.0);
        assert!((mae(&a, &b).unwrap() - 0.1).abs() < 1e-12);
        assert!(mae(&a, &clip(vec![0.0; 6], 3)).is_err());
    }

    fn opt_vec(n: usize) -> impl Strategy<Value = Option<Vec<f64>>> {
        proptest::option::of(proptest::collection::vec(-2.0..2.0f64, n))
    }

    proptest! {
        #[test]
        fn metrics_are_bounded(
            q_ref in opt_vec(3), q in opt_vec(3), tau in opt_vec(3), acc in opt_vec(3),
            tp in opt_vec(3), t in opt_vec(3), n in proptest::option::of(0u32..10),
            hr in opt_vec(2), h in opt_vec(2), wr in proptest::option::of(-3.0..3.0f64),
            w in proptest::option::of(-3.0..3.0f64), vf in opt_vec(4),
        ) {
            let f = MetricFrame {
                q_ref, q, tau, qddot: acc, target_prev: tp, target: t, collisions: n,
                head_ref: hr, head: h, base_rate_ref: wr, base_rate: w, foot_velocity: vf,
                ..Default::default()
            };
            for phase in [Phase::DanceImitation, Phase::Locomotion, Phase::Gaze] {
                let r = rewards(&f, phase);
                for m in [MetricName::JointImitation, MetricName::BaseAngularVelocity, MetricName::EndEffectorOrientation] {
                    if let Some(v) = r.raw[&m] { prop_assert!(v > 0.0 && v <= 1.0); }
                }
                for m in &MetricName::ALL[3..8] {
                    if let Some(v) = r.scaled[m] { prop_assert!(v <= 0.0); }
                }
            }
        }
    }
}
