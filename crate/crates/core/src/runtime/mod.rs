//! Inference-time machinery: latent propagation, transition blending,
//! frame decoding, fresh re-encoding, the PD tracking surrogate and the
//! reward/metric formulas.

mod player;
mod rewards;
mod tracker;

use serde::{Deserialize, Serialize};

pub use player::{Command, Frame, Mode, PlaybackState, Player, Source};
pub use rewards::{mae, rewards, MetricFrame, MetricName, Phase, RewardReport};
pub use tracker::{pd_track_step, Feedforward, TrackerConfig, TrackerState};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::motiondata::{MotionClip, NormStats};
use crate::pae::{Checkpoint, LatentState, ModelConfig, ModelParams, Pae};
use crate::scalar::{wrap_phase, Scalar};
use crate::spectral::SpectralParams;

/// Transition length used when none is given, seconds.
pub const DEFAULT_TRANSITION_S: f64 = 0.5;

/// Advances every phase by `freq_scale·f·dt`; `θ` is returned untouched.
pub fn propagate<T: Scalar>(latent: &LatentState<T>, dt: T, freq_scale: T) -> LatentState<T> {
    let phi = latent
        .phi
        .iter()
        .zip(&latent.theta)
        .map(|(&p, t)| wrap_phase(p + freq_scale * t.f * dt))
        .collect();
    LatentState {
        phi,
        theta: latent.theta.clone(),
    }
}

/// How phases are interpolated during a transition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseBlend {
    /// Along the shorter arc of the phase circle.
    #[default]
    ShortestArc,
    /// Straight interpolation of the wrapped values.
    Linear,
}

/// Endpoint latents of a switch from motion A to motion B.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionPlan<T> {
    pub from: LatentState<T>,
    pub to: LatentState<T>,
    pub duration_s: f64,
    pub elapsed_s: f64,
    pub phase_blend: PhaseBlend,
}

impl<T: Scalar> TransitionPlan<T> {
    pub fn new(from: LatentState<T>, to: LatentState<T>, duration_s: f64) -> Result<Self> {
        if !(duration_s > 0.0 && duration_s.is_finite()) {
            return Err(Error::invalid(format!(
                "transition duration must be positive, got {duration_s}"
            )));
        }
        if from.channels() != to.channels() {
            return Err(Error::invalid(
                "transition endpoints differ in channel count",
            ));
        }
        Ok(Self {
            from,
            to,
            duration_s,
            elapsed_s: 0.0,
            phase_blend: PhaseBlend::default(),
        })
    }

    pub fn finished(&self) -> bool {
        self.elapsed_s >= self.duration_s
    }

    /// Blend at the plan's own elapsed time.
    pub fn current(&self) -> LatentState<T> {
        blend(self, self.elapsed_s)
    }
}

/// Weight on motion A: 1 at the start, 0 once `duration` has elapsed.
pub fn weight_on_from(elapsed_s: f64, duration_s: f64) -> f64 {
    1.0 - (elapsed_s / duration_s).clamp(0.0, 1.0)
}

/// Interpolated latent `α·A + (1−α)·B`, with `α` ramping 1 → 0.
///
/// Out-of-range times are clamped (with a warning). The endpoints come back
/// bit-identical to the plan's latents.
pub fn blend<T: Scalar>(plan: &TransitionPlan<T>, elapsed_s: f64) -> LatentState<T> {
    let clamped = elapsed_s.clamp(0.0, plan.duration_s);
    if clamped != elapsed_s {
        log::warn!(
            "blend time {elapsed_s} outside [0, {}], clamped",
            plan.duration_s
        );
    }
    if clamped <= 0.0 {
        return plan.from.clone();
    }
    if clamped >= plan.duration_s {
        return plan.to.clone();
    }
    let w = T::of(weight_on_from(clamped, plan.duration_s));
    let u = T::one() - w;
    let theta = plan
        .from
        .theta
        .iter()
        .zip(&plan.to.theta)
        .map(|(a, b)| SpectralParams {
            f: w * a.f + u * b.f,
            a: w * a.a + u * b.a,
            b: w * a.b + u * b.b,
        })
        .collect();
    let phi = plan
        .from
        .phi
        .iter()
        .zip(&plan.to.phi)
        .map(|(&pa, &pb)| match plan.phase_blend {
            PhaseBlend::ShortestArc => wrap_phase(pa + u * wrap_phase(pb - pa)),
            PhaseBlend::Linear => wrap_phase(w * pa + u * pb),
        })
        .collect();
    LatentState { phi, theta }
}

/// A loaded checkpoint ready for inference in physical units.
#[derive(Clone, Debug)]
pub struct Model {
    net: Pae<f64>,
    params: ModelParams<f64>,
    norm: NormStats,
}

impl Model {
    pub fn new(ckpt: Checkpoint) -> Result<Self> {
        let net = Pae::new(&ckpt.config)?;
        if ckpt.norm.dims() != ckpt.config.d {
            return Err(Error::invalid(
                "normalization width differs from model width",
            ));
        }
        Ok(Self {
            net,
            params: ckpt.params,
            norm: ckpt.norm,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        self.net.config()
    }

    pub fn network(&self) -> &Pae<f64> {
        &self.net
    }

    pub fn params(&self) -> &ModelParams<f64> {
        &self.params
    }

    pub fn norm(&self) -> &NormStats {
        &self.norm
    }

    pub fn dt(&self) -> f64 {
        self.config().dt
    }

    /// Encodes a `d × H` window given in physical units.
    pub fn encode_window(&self, window: &Matrix<f64>) -> Result<LatentState<f64>> {
        Ok(self.net.encode(&self.params, &self.norm.apply(window))?.0)
    }

    /// Full decoded window, physical units.
    pub fn decode_window(&self, latent: &LatentState<f64>) -> Result<Matrix<f64>> {
        Ok(self.norm.invert(&self.net.decode(&self.params, latent)?))
    }

    /// The decoded window's final column (the current instant), physical units.
    pub fn decode_frame(&self, latent: &LatentState<f64>) -> Result<Vec<f64>> {
        let w = self.net.decode(&self.params, latent)?;
        let last = w.column(w.cols() - 1);
        Ok(self.norm.invert_vec(&last))
    }

    /// Latent of the window of `clip` ending at frame `end` (inclusive).
    pub fn fresh_reencode(&self, clip: &MotionClip, end: usize) -> Result<LatentState<f64>> {
        let h = self.config().window;
        if end + 1 < h || end >= clip.frames() {
            return Err(Error::invalid(format!(
                "re-encoding at frame {end} needs {h} frames of history within {} frames",
                clip.frames()
            )));
        }
        let states = clip.model_states(self.config().use_velocities)?;
        self.encode_window(&states.columns(end + 1 - h, h))
    }
}

/// Decoded current frame; see [`Model::decode_frame`].
pub fn decode_frame(model: &Model, latent: &LatentState<f64>) -> Result<Vec<f64>> {
    model.decode_frame(latent)
}

/// See [`Model::fresh_reencode`].
pub fn fresh_reencode(model: &Model, clip: &MotionClip, end: usize) -> Result<LatentState<f64>> {
    model.fresh_reencode(clip, end)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn latent(phi: &[f64], theta: &[(f64, f64, f64)]) -> LatentState<f64> {
        LatentState {
            phi: phi.to_vec(),
            theta: theta
                .iter()
                .map(|&(f, a, b)| SpectralParams { f, a, b })
                .collect(),
        }
    }

    #[test]
    fn propagate_examples() {
        let z = latent(
            &[0.40, 0.49, 0.1],
            &[(2.0, 1.0, 0.0), (2.0, 1.0, 0.0), (3.0, 1.0, 0.0)],
        );
        let p = propagate(&z, 0.01, 1.0);
        assert!((p.phi[0] - 0.42).abs() < 1e-12);
        assert!((p.phi[1] + 0.49).abs() < 1e-12);
        assert_eq!(p.theta, z.theta);
        assert_eq!(propagate(&z, 0.01, 0.0), z);
    }

    #[test]
    fn blend_examples() {
        let a = latent(&[0.45], &[(1.0, 0.2, 0.0)]);
        let b = latent(&[-0.45], &[(2.0, 0.4, 0.2)]);
        let plan = TransitionPlan::new(a.clone(), b.clone(), 0.5).unwrap();
        assert_eq!(blend(&plan, 0.0), a);
        assert_eq!(blend(&plan, 0.5), b);
        let mid = blend(&plan, 0.25);
        let t = mid.theta[0];
        assert!(
            (t.f - 1.5).abs() < 1e-12 && (t.a - 0.3).abs() < 1e-12 && (t.b - 0.1).abs() < 1e-12
        );
        // the short arc passes through the seam
        assert!((mid.phi[0] + 0.5).abs() < 1e-12, "{}", mid.phi[0]);
        let linear = TransitionPlan {
            phase_blend: PhaseBlend::Linear,
            ..plan.clone()
        };
        assert!(blend(&linear, 0.25).phi[0].abs() < 1e-12);
        assert_eq!(blend(&plan, -1.0), a);
        assert_eq!(blend(&plan, 9.0), b);
    }

    #[test]
    fn transition_plan_rejects_bad_duration() {
        let z = LatentState::<f64>::zeros(2);
        assert!(TransitionPlan::new(z.clone(), z.clone(), 0.0).is_err());
        assert!(TransitionPlan::new(z.clone(), LatentState::zeros(3), 0.5).is_err());
    }
}
