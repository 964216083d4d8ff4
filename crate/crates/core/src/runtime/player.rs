//! A ticking playback controller shared by offline roll-outs and the live service.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::rewards::{rewards, MetricFrame, Phase};
use super::tracker::{pd_track_step, TrackerConfig, TrackerState};
use super::{propagate, Model, TransitionPlan, DEFAULT_TRANSITION_S};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::motiondata::MotionClip;
use crate::pae::LatentState;

/// How the latent state evolves between ticks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Re-encode the reference window ending at the cursor every tick.
    ReplayEncoded,
    /// Encode once, then advance phases with the latent frequency.
    #[default]
    PropagateLatent,
}

/// Where the latent comes from: a clip and a (fractional) frame cursor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub clip: usize,
    pub cursor: f64,
}

/// Operator commands, applied between ticks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Command {
    /// Start (or hard-switch to) a motion; `cursor` is the frame the first
    /// window ends on.
    Play {
        motion: String,
        #[serde(default)]
        cursor: Option<usize>,
    },
    Stop,
    Transition {
        target: String,
        #[serde(default)]
        duration_s: Option<f64>,
        #[serde(default)]
        cursor: Option<usize>,
    },
    FreqScale {
        value: f64,
    },
    Mode {
        mode: Mode,
    },
}

/// One emitted tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub motion: String,
    pub q: Vec<f64>,
    pub phi: Vec<f64>,
    pub f: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Weight on the outgoing motion while a transition is running.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub blend: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub metrics: Option<BTreeMap<String, f64>>,
}

#[derive(Clone, Debug, PartialEq)]
struct Track {
    source: Source,
    latent: LatentState<f64>,
}

#[derive(Clone, Debug, PartialEq)]
struct ActiveTransition {
    to: Track,
    plan: TransitionPlan<f64>,
}

/// Everything a tick reads or writes.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaybackState {
    current: Option<Track>,
    transition: Option<ActiveTransition>,
    pub freq_scale: f64,
    pub mode: Mode,
    /// Frames emitted so far.
    pub frames: u64,
    /// Set when the current track has not yet produced a frame.
    fresh: bool,
}

impl Default for PlaybackState {
    fn default() -> Self {
        Self {
            current: None,
            transition: None,
            freq_scale: 1.0,
            mode: Mode::default(),
            frames: 0,
            fresh: false,
        }
    }
}

impl PlaybackState {
    pub fn playing(&self) -> bool {
        self.current.is_some()
    }

    pub fn source(&self) -> Option<&Source> {
        self.current.as_ref().map(|t| &t.source)
    }

    pub fn latent(&self) -> Option<&LatentState<f64>> {
        self.current.as_ref().map(|t| &t.latent)
    }

    pub fn in_transition(&self) -> bool {
        self.transition.is_some()
    }
}

/// Owns the model, the motion library and the playback state.
#[derive(Clone, Debug)]
pub struct Player {
    model: Model,
    clips: Vec<MotionClip>,
    states: Vec<Matrix<f64>>,
    state: PlaybackState,
    tracker: Option<TrackerState>,
    tracker_cfg: Option<TrackerConfig>,
}

impl Player {
    pub fn new(model: Model, clips: Vec<MotionClip>) -> Result<Self> {
        let h = model.config().window;
        let mut states = Vec::with_capacity(clips.len());
        for c in &clips {
            let s = c.model_states(model.config().use_velocities)?;
            if s.rows() != model.config().d {
                return Err(Error::invalid(format!(
                    "clip {} has {} rows, model expects {}",
                    c.name,
                    s.rows(),
                    model.config().d
                )));
            }
            if s.cols() < h {
                return Err(Error::invalid(format!(
                    "clip {} shorter than window ({} < {h} frames)",
                    c.name,
                    s.cols()
                )));
            }
            states.push(s);
        }
        Ok(Self {
            model,
            clips,
            states,
            state: PlaybackState::default(),
            tracker: None,
            tracker_cfg: None,
        })
    }

    /// Drives a PD tracker with the decoded frames and reports its metrics.
    pub fn with_tracker(mut self, cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        self.tracker_cfg = Some(cfg);
        Ok(self)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn clips(&self) -> &[MotionClip] {
        &self.clips
    }

    pub fn motion_names(&self) -> Vec<String> {
        self.clips.iter().map(|c| c.name.clone()).collect()
    }

    pub fn state(&self) -> &PlaybackState {
        &self.state
    }

    pub fn tracker(&self) -> Option<&TrackerState> {
        self.tracker.as_ref()
    }

    fn clip_index(&self, name: &str) -> Result<usize> {
        self.clips
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::invalid(format!("unknown motion {name:?}")))
    }

    fn start_cursor(&self, clip: usize, cursor: Option<usize>) -> Result<f64> {
        let h = self.model.config().window;
        let frames = self.states[clip].cols();
        let c = cursor.unwrap_or(h - 1);
        if c + 1 < h || c >= frames {
            return Err(Error::invalid(format!(
                "cursor {c} outside [{}, {}]",
                h - 1,
                frames - 1
            )));
        }
        Ok(c as f64)
    }

    /// `d × H` window ending at a fractional cursor, linearly interpolated.
    fn window(&self, source: &Source) -> Matrix<f64> {
        let s = &self.states[source.clip];
        let h = self.model.config().window;
        let base = source.cursor.floor();
        let frac = source.cursor - base;
        let first = base as usize + 1 - h;
        Matrix::from_fn(s.rows(), h, |r, j| {
            let i = first + j;
            let v = s.get(r, i);
            if frac == 0.0 || i + 1 >= s.cols() {
                v
            } else {
                v + frac * (s.get(r, i + 1) - v)
            }
        })
    }

    fn encode_at(&self, source: &Source) -> Result<LatentState<f64>> {
        self.model.encode_window(&self.window(source))
    }

    fn track_at(&self, clip: usize, cursor: Option<usize>) -> Result<Track> {
        let source = Source {
            clip,
            cursor: self.start_cursor(clip, cursor)?,
        };
        let latent = self.encode_at(&source)?;
        Ok(Track { source, latent })
    }

    /// Applies a command; failures leave the state untouched.
    pub fn apply(&mut self, cmd: &Command) -> Result<()> {
        match cmd {
            Command::Play { motion, cursor } => {
                let track = self.track_at(self.clip_index(motion)?, *cursor)?;
                self.state.current = Some(track);
                self.state.transition = None;
                self.state.fresh = true;
            }
            Command::Stop => {
                self.state.current = None;
                self.state.transition = None;
                self.tracker = None;
            }
            Command::Transition {
                target,
                duration_s,
                cursor,
            } => {
                let Some(cur) = &self.state.current else {
                    return Err(Error::invalid("transition requested while stopped"));
                };
                if self.state.transition.is_some() {
                    return Err(Error::invalid("a transition is already running"));
                }
                let to = self.track_at(self.clip_index(target)?, *cursor)?;
                let plan = TransitionPlan::new(
                    cur.latent.clone(),
                    to.latent.clone(),
                    duration_s.unwrap_or(DEFAULT_TRANSITION_S),
                )?;
                self.state.transition = Some(ActiveTransition { to, plan });
            }
            Command::FreqScale { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return Err(Error::invalid(format!(
                        "frequency scale must be finite and non-negative, got {value}"
                    )));
                }
                self.state.freq_scale = *value;
            }
            Command::Mode { mode } => self.state.mode = *mode,
        }
        Ok(())
    }

    fn advance(&self, track: &mut Track) -> Result<()> {
        let h = self.model.config().window;
        let last = (self.states[track.source.clip].cols() - 1) as f64;
        let first = (h - 1) as f64;
        let mut c = track.source.cursor + self.state.freq_scale;
        if c > last {
            // loop back to the first complete window
            c = first + (c - last - 1.0).rem_euclid(last - first + 1.0);
        }
        track.source.cursor = c;
        track.latent = match self.state.mode {
            Mode::PropagateLatent => {
                propagate(&track.latent, self.model.dt(), self.state.freq_scale)
            }
            Mode::ReplayEncoded => self.encode_at(&track.source)?,
        };
        Ok(())
    }

    /// Advances one control period and returns the frame, or `None` while stopped.
    pub fn tick(&mut self) -> Result<Option<Frame>> {
        let Some(mut current) = self.state.current.clone() else {
            return Ok(None);
        };
        let mut transition = self.state.transition.clone();
        if !self.state.fresh {
            self.advance(&mut current)?;
        }
        let mut blend = None;
        let mut latent = current.latent.clone();
        if let Some(tr) = &mut transition {
            self.advance(&mut tr.to)?;
            tr.plan.from = current.latent.clone();
            tr.plan.to = tr.to.latent.clone();
            tr.plan.elapsed_s = ((tr.plan.elapsed_s + self.model.dt()) * 1e9).round() / 1e9;
            latent = tr.plan.current();
            blend = Some(super::weight_on_from(tr.plan.elapsed_s, tr.plan.duration_s));
        }
        let q = self.model.decode_frame(&latent)?;
        if let Some(tr) = transition.take_if(|tr| tr.plan.finished()) {
            current = tr.to;
        }
        let metrics = self.track(&q)?;
        let frame = Frame {
            t: self.state.frames as f64 * self.model.dt(),
            motion: self.clips[transition
                .as_ref()
                .map_or(current.source.clip, |tr| tr.to.source.clip)]
            .name
            .clone(),
            q,
            phi: latent.phi.clone(),
            f: latent.frequencies(),
            a: latent.amplitudes(),
            b: latent.offsets(),
            blend,
            metrics,
        };
        self.state.current = Some(current);
        self.state.transition = transition;
        self.state.fresh = false;
        self.state.frames += 1;
        Ok(Some(frame))
    }

    fn track(&mut self, target: &[f64]) -> Result<Option<BTreeMap<String, f64>>> {
        let Some(cfg) = &self.tracker_cfg else {
            return Ok(None);
        };
        let n = self.clips[0].n_joints.min(target.len());
        let target = &target[..n];
        let tracker = match &mut self.tracker {
            Some(t) => t,
            slot => slot.insert(TrackerState::at_rest(cfg.clone(), target)?),
        };
        let prev = tracker.last_target.clone();
        pd_track_step(tracker, target)?;
        let frame = MetricFrame {
            q_ref: Some(target.to_vec()),
            q: Some(tracker.q.clone()),
            tau: Some(tracker.tau.clone()),
            qddot: Some(tracker.qddot.clone()),
            target_prev: Some(prev),
            target: Some(target.to_vec()),
            ..Default::default()
        };
        let report = rewards(&frame, Phase::DanceImitation);
        Ok(Some(
            report
                .raw
                .into_iter()
                .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
                .collect(),
        ))
    }
}
