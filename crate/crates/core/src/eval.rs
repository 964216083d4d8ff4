//! Desk-scale experiments on trained checkpoints: end-to-end tracking error,
//! latent response to aperiodic events, frequency interpolation and
//! transition smoothness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::motiondata::{augment_frequencies, BumpEvent, MotionClip};
use crate::runtime::{
    blend, mae, pd_track_step, propagate, rewards, Command, MetricFrame, MetricName, Mode, Model,
    Phase, Player, TrackerConfig, TrackerState, TransitionPlan,
};

/// Per-clip and mean tracking errors, radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub clips: Vec<ClipTracking>,
    /// Mean over clips of the tracked error against the reference.
    pub mae: f64,
    /// Mean over clips of the decoded-target error against the reference.
    pub decode_mae: f64,
    /// Mean over clips of the per-frame imitation metric.
    pub imitation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipTracking {
    pub name: String,
    pub mae: f64,
    pub decode_mae: f64,
    pub imitation: f64,
}

fn joint_rows(m: &Matrix<f64>, n: usize) -> Matrix<f64> {
    Matrix::from_fn(n, m.cols(), |r, c| m.get(r, c))
}

fn clip_like(template: &MotionClip, name: &str, states: Matrix<f64>) -> MotionClip {
    MotionClip {
        name: name.to_string(),
        base_motion_id: template.base_motion_id.clone(),
        freq_factor: template.freq_factor,
        dt: template.dt,
        n_joints: states.rows(),
        with_velocities: false,
        states,
        events: Vec::new(),
    }
}

/// Decodes a target for every frame from `H − 1` on, feeds it to a PD tracker
/// and measures the tracker against the reference. `ReplayEncoded` re-encodes
/// the window ending at each frame; `PropagateLatent` encodes once at `H − 1`
/// and then only advances phases, holding θ for the whole clip.
pub fn track_clip(
    model: &Model,
    clip: &MotionClip,
    tracker: &TrackerConfig,
    mode: Mode,
) -> Result<ClipTracking> {
    let h = model.config().window;
    if clip.frames() < h {
        return Err(Error::invalid(format!(
            "clip {} shorter than window",
            clip.name
        )));
    }
    let n = clip.n_joints;
    let positions = clip.positions();
    let reference = joint_rows(&positions.columns(h - 1, clip.frames() - h + 1), n);
    let mut tracked = Matrix::zeros(n, reference.cols());
    let mut decoded = Matrix::zeros(n, reference.cols());
    let mut state = TrackerState::at_rest(tracker.clone(), &reference.column(0))?;
    let mut imitation = 0.0;
    let mut z = model.fresh_reencode(clip, h - 1)?;
    for (k, end) in (h - 1..clip.frames()).enumerate() {
        if k > 0 {
            z = match mode {
                Mode::ReplayEncoded => model.fresh_reencode(clip, end)?,
                Mode::PropagateLatent => propagate(&z, clip.dt, 1.0),
            };
        }
        let target = &model.decode_frame(&z)?[..n];
        pd_track_step(&mut state, target)?;
        for j in 0..n {
            tracked.set(j, k, state.q[j]);
            decoded.set(j, k, target[j]);
        }
        let frame = MetricFrame {
            q_ref: Some(target.to_vec()),
            q: Some(state.q.clone()),
            ..Default::default()
        };
        imitation +=
            rewards(&frame, Phase::DanceImitation).raw[&MetricName::JointImitation].unwrap_or(0.0);
    }
    let r = clip_like(clip, &clip.name, reference);
    Ok(ClipTracking {
        name: clip.name.clone(),
        mae: mae(&r, &clip_like(clip, "tracked", tracked))?,
        decode_mae: mae(&r, &clip_like(clip, "decoded", decoded))?,
        imitation: imitation / r.frames() as f64,
    })
}

pub fn tracking_report(
    model: &Model,
    clips: &[MotionClip],
    tracker: &TrackerConfig,
    mode: Mode,
) -> Result<TrackingReport> {
    if clips.is_empty() {
        return Err(Error::invalid("no clips to track"));
    }
    let per: Vec<ClipTracking> = clips
        .iter()
        .map(|c| track_clip(model, c, tracker, mode))
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    Ok(TrackingReport {
        mae: per.iter().map(|c| c.mae).sum::<f64>() / n,
        decode_mae: per.iter().map(|c| c.decode_mae).sum::<f64>() / n,
        imitation: per.iter().map(|c| c.imitation).sum::<f64>() / n,
        clips: per,
    })
}

/// How far the latent `(f, a)` wander during a bump, per channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnsetReport {
    pub clip: String,
    pub joint: usize,
    /// Frames (window ends) spanning the bump.
    pub frames: (usize, usize),
    /// Max |f − f_pre| per channel under fresh re-encoding.
    pub reencode_df: Vec<f64>,
    /// Max |a − a_pre| per channel under fresh re-encoding.
    pub reencode_da: Vec<f64>,
    /// Same maxima under latent propagation from the pre-bump state.
    pub propagate_df: Vec<f64>,
    pub propagate_da: Vec<f64>,
}

impl OnsetReport {
    /// Channels whose re-encoded `f` and `a` both move at least `ratio`
    /// times as far as under propagation, and by more than `floor`.
    pub fn responsive_channels(&self, ratio: f64, floor: f64) -> Vec<usize> {
        (0..self.reencode_df.len())
            .filter(|&c| {
                let (df, da) = (self.reencode_df[c], self.reencode_da[c]);
                df > floor
                    && da > floor
                    && df >= ratio * self.propagate_df[c]
                    && da >= ratio * self.propagate_da[c]
            })
            .collect()
    }
}

/// Compares fresh re-encoding with propagation across the support of `event`.
pub fn onset_response(model: &Model, clip: &MotionClip, event: &BumpEvent) -> Result<OnsetReport> {
    let h = model.config().window;
    let (lo, hi) = event.support();
    let start = ((lo / clip.dt).floor().max(0.0) as usize).max(h - 1);
    let end = ((hi / clip.dt).ceil() as usize).min(clip.frames() - 1);
    if end <= start {
        return Err(Error::invalid(format!(
            "bump on {} lies outside the encodable range",
            clip.name
        )));
    }
    let pre = model.fresh_reencode(clip, start)?;
    let c = pre.channels();
    let mut out = OnsetReport {
        clip: clip.name.clone(),
        joint: event.joint,
        frames: (start, end),
        reencode_df: vec![0.0; c],
        reencode_da: vec![0.0; c],
        propagate_df: vec![0.0; c],
        propagate_da: vec![0.0; c],
    };
    let mut prop = pre.clone();
    for e in start + 1..=end {
        let z = model.fresh_reencode(clip, e)?;
        prop = propagate(&prop, clip.dt, 1.0);
        for ch in 0..c {
            let (p, r, q) = (&pre.theta[ch], &z.theta[ch], &prop.theta[ch]);
            out.reencode_df[ch] = out.reencode_df[ch].max((r.f - p.f).abs());
            out.reencode_da[ch] = out.reencode_da[ch].max((r.a - p.a).abs());
            out.propagate_df[ch] = out.propagate_df[ch].max((q.f - p.f).abs());
            out.propagate_da[ch] = out.propagate_da[ch].max((q.a - p.a).abs());
        }
    }
    Ok(out)
}

/// Mean latent frequency of warped variants of one base clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub clip: String,
    /// Channel with the largest mean amplitude on the unwarped clip.
    pub channel: usize,
    /// `(factor, mean f)` in the order requested.
    pub mean_f: Vec<(f64, f64)>,
}

impl FrequencyReport {
    /// Whether the probe's mean frequency lies strictly between the two bracket factors'.
    pub fn interpolates(&self, probe: f64, low: f64, high: f64) -> bool {
        let get = |k: f64| {
            self.mean_f
                .iter()
                .find(|(f, _)| (*f - k).abs() < 1e-12)
                .map(|x| x.1)
        };
        match (get(probe), get(low), get(high)) {
            (Some(p), Some(l), Some(h)) => (l < p && p < h) || (h < p && p < l),
            _ => false,
        }
    }
}

fn mean_latents(model: &Model, clip: &MotionClip) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = model.config().window;
    let c = model.config().c;
    let (mut f, mut a) = (vec![0.0; c], vec![0.0; c]);
    let count = (clip.frames() + 1 - h) as f64;
    for end in h - 1..clip.frames() {
        let z = model.fresh_reencode(clip, end)?;
        for ch in 0..c {
            f[ch] += z.theta[ch].f / count;
            a[ch] += z.theta[ch].a / count;
        }
    }
    Ok((f, a))
}

/// Encodes every window of `base` warped by each factor and averages the latent
/// frequency of the dominant channel.
pub fn frequency_response(
    model: &Model,
    base: &MotionClip,
    factors: &[f64],
) -> Result<FrequencyReport> {
    let (_, a) = mean_latents(model, base)?;
    let channel = (0..a.len())
        .max_by(|&i, &j| a[i].total_cmp(&a[j]))
        .unwrap_or(0);
    let variants = augment_frequencies(std::slice::from_ref(base), factors)?;
    let mut mean_f = Vec::with_capacity(factors.len());
    for (k, v) in factors.iter().zip(&variants) {
        mean_f.push((*k, mean_latents(model, v)?.0[channel]));
    }
    Ok(FrequencyReport {
        clip: base.name.clone(),
        channel,
        mean_f,
    })
}

/// Peak joint speed of a hard switch and of a latent blend between two motions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionReport {
    pub from: String,
    pub to: String,
    /// Cursor of the target's first window.
    pub to_cursor: usize,
    pub hard_peak: f64,
    pub blend_peak: f64,
    /// Frames the blend spanned.
    pub blended_frames: usize,
    /// Blend weights 1 and 0 reproduce the endpoint latents exactly, and the
    /// final blended frame equals the target played alone.
    pub endpoints_exact: bool,
}

impl TransitionReport {
    pub fn reduction(&self) -> f64 {
        self.hard_peak / self.blend_peak
    }
}

fn peak_speed(frames: &[Vec<f64>], dt: f64) -> f64 {
    frames
        .windows(2)
        .flat_map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (b - a).abs() / dt))
        .fold(0.0, f64::max)
}

fn roll(player: &mut Player, n: usize) -> Result<Vec<crate::runtime::Frame>> {
    (0..n)
        .map(|_| {
            player
                .tick()?
                .ok_or_else(|| Error::invalid("player stopped"))
        })
        .collect()
}

/// Plays `from` for `lead_s`, then switches to `to` either at once or with a
/// latent blend of `duration_s`, and plays `tail_s` more. The target's start
/// cursor is the one whose decoded first frame lies farthest from the
/// outgoing pose, the hardest case for a switch.
pub fn transition_smoothness(
    model: &Model,
    from: &MotionClip,
    to: &MotionClip,
    lead_s: f64,
    duration_s: f64,
    tail_s: f64,
) -> Result<TransitionReport> {
    let dt = model.dt();
    let h = model.config().window;
    let ticks = |s: f64| (s / dt).round() as usize;
    let player = Player::new(model.clone(), vec![from.clone(), to.clone()])?;
    let play_a = Command::Play {
        motion: from.name.clone(),
        cursor: None,
    };

    let mut lead = player.clone();
    lead.apply(&play_a)?;
    let lead_frames = roll(&mut lead, ticks(lead_s))?;
    let last_a = &lead_frames
        .last()
        .ok_or_else(|| Error::invalid("lead time shorter than one tick"))?
        .q;

    let mut best = (h - 1, -1.0);
    for cursor in h - 1..to.frames() {
        let q = model.decode_frame(&model.fresh_reencode(to, cursor)?)?;
        let jump = q
            .iter()
            .zip(last_a)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if jump > best.1 {
            best = (cursor, jump);
        }
    }
    let to_cursor = best.0;

    let mut hard = lead.clone();
    hard.apply(&Command::Play {
        motion: to.name.clone(),
        cursor: Some(to_cursor),
    })?;
    let mut hard_q: Vec<Vec<f64>> = lead_frames.iter().map(|f| f.q.clone()).collect();
    hard_q.extend(
        roll(&mut hard, ticks(duration_s + tail_s))?
            .into_iter()
            .map(|f| f.q),
    );

    let mut soft = lead.clone();
    soft.apply(&Command::Transition {
        target: to.name.clone(),
        duration_s: Some(duration_s),
        cursor: Some(to_cursor),
    })?;
    let soft_frames = roll(&mut soft, ticks(duration_s + tail_s))?;
    let blended_frames = soft_frames.iter().filter(|f| f.blend.is_some()).count();
    let mut soft_q: Vec<Vec<f64>> = lead_frames.iter().map(|f| f.q.clone()).collect();
    soft_q.extend(soft_frames.iter().map(|f| f.q.clone()));

    // endpoints: continuing A alone gives the blend's weight-1 frame at the
    // command instant; the weight-0 frame equals B played on its own
    let mut only_b = player.clone();
    only_b.apply(&Command::Play {
        motion: to.name.clone(),
        cursor: Some(to_cursor),
    })?;
    let b_frames = roll(&mut only_b, blended_frames + 1)?;
    let last_blend = &soft_frames[blended_frames - 1];
    let a_latent = lead
        .state()
        .latent()
        .cloned()
        .ok_or_else(|| Error::invalid("player stopped"))?;
    let b_latent = model.fresh_reencode(to, to_cursor)?;
    let plan = TransitionPlan::new(a_latent.clone(), b_latent.clone(), duration_s)?;
    let start_exact = blend(&plan, 0.0) == a_latent && blend(&plan, duration_s) == b_latent;
    let endpoints_exact =
        start_exact && last_blend.blend == Some(0.0) && last_blend.q == b_frames[blended_frames].q;

    Ok(TransitionReport {
        from: from.name.clone(),
        to: to.name.clone(),
        to_cursor,
        hard_peak: peak_speed(&hard_q, dt),
        blend_peak: peak_speed(&soft_q, dt),
        blended_frames,
        endpoints_exact,
    })
}
