//! Torque-limited PD joint model standing in for an actuated robot.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Proportional gain, s⁻² for unit inertia.
    pub kp: f64,
    /// Derivative gain, s⁻¹ for unit inertia.
    pub kd: f64,
    pub inertia: f64,
    pub tau_limit: f64,
    /// Integration step, seconds.
    pub sim_dt: f64,
    /// Integration steps per control tick.
    pub substeps: usize,
    pub feedforward: Feedforward,
}

/// Reference terms added to the PD law, estimated by finite differences of
/// successive targets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedforward {
    /// Plain PD toward a static target each tick.
    #[default]
    None,
    /// Damp toward the target velocity instead of zero.
    Velocity,
    /// Velocity damping plus `I·q̈*` (computed torque).
    Acceleration,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            kp: 100.0,
            kd: 20.0,
            inertia: 1.0,
            tau_limit: 50.0,
            sim_dt: 0.0025,
            substeps: 4,
            feedforward: Feedforward::None,
        }
    }
}

impl TrackerConfig {
    pub fn control_period(&self) -> f64 {
        self.sim_dt * self.substeps as f64
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.kp >= 0.0
            && self.kd >= 0.0
            && self.inertia > 0.0
            && self.tau_limit >= 0.0
            && self.sim_dt > 0.0
            && self.substeps > 0
            && [self.kp, self.kd, self.inertia, self.sim_dt]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid tracker settings {self:?}")))
        }
    }
}

/// Joint positions/velocities plus what the last tick applied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub cfg: TrackerConfig,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub last_target: Vec<f64>,
    /// Target before `last_target`.
    pub prev_target: Vec<f64>,
    /// Torque of the final substep of the last tick.
    pub tau: Vec<f64>,
    pub qddot: Vec<f64>,
}

impl TrackerState {
    /// At rest at `q0`, with `q0` as the previous target.
    pub fn at_rest(cfg: TrackerConfig, q0: &[f64]) -> Result<Self> {
        cfg.validate()?;
        let n = q0.len();
        Ok(Self {
            cfg,
            q: q0.to_vec(),
            qdot: vec![0.0; n],
            last_target: q0.to_vec(),
            prev_target: q0.to_vec(),
            tau: vec![0.0; n],
            qddot: vec![0.0; n],
        })
    }

    /// `½·I·q̇² + ½·kp·(target − q)²` summed over joints.
    pub fn energy(&self, target: &[f64]) -> f64 {
        let c = &self.cfg;
        self.q
            .iter()
            .zip(&self.qdot)
            .zip(target)
            .map(|((q, v), t)| 0.5 * c.inertia * v * v + 0.5 * c.kp * (t - q) * (t - q))
            .sum()
    }
}

/// One control tick: `substeps` semi-implicit Euler steps of
/// `I·q̈ = clamp(I·a* + kp·(r − q) − kd·(q̇ − v*), ±tau_limit)`. Without
/// feedforward `r` is the target and `v* = a* = 0`; with it `r` ramps from the
/// previous target to the new one during the tick.
pub fn pd_track_step(state: &mut TrackerState, target: &[f64]) -> Result<()> {
    if target.len() != state.q.len() {
        return Err(Error::invalid(format!(
            "target has {} joints, tracker {}",
            target.len(),
            state.q.len()
        )));
    }
    if let Some(j) = target.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite target for joint {j}")));
    }
    let c = state.cfg.clone();
    let period = c.control_period();
    for j in 0..target.len() {
        let (v_ref, a_ref) = match c.feedforward {
            Feedforward::None => (0.0, 0.0),
            Feedforward::Velocity => ((target[j] - state.last_target[j]) / period, 0.0),
            Feedforward::Acceleration => (
                (target[j] - state.last_target[j]) / period,
                (target[j] - 2.0 * state.last_target[j] + state.prev_target[j]) / (period * period),
            ),
        };
        let (mut q, mut v) = (state.q[j], state.qdot[j]);
        let (mut tau, mut acc) = (0.0, 0.0);
        for i in 1..=c.substeps {
            // with feedforward the reference moves from the previous target to
            // the new one across the tick instead of jumping
            let r = if c.feedforward == Feedforward::None {
                target[j]
            } else {
                state.last_target[j]
                    + (target[j] - state.last_target[j]) * i as f64 / c.substeps as f64
            };
            tau = (c.inertia * a_ref + c.kp * (r - q) + c.kd * (v_ref - v))
                .clamp(-c.tau_limit, c.tau_limit);
            acc = tau / c.inertia;
            v += acc * c.sim_dt;
            q += v * c.sim_dt;
        }
        state.q[j] = q;
        state.qdot[j] = v;
        state.tau[j] = tau;
        state.qddot[j] = acc;
    }
    std::mem::swap(&mut state.prev_target, &mut state.last_target);
    state.last_target.copy_from_slice(target);
    Ok(())
}
