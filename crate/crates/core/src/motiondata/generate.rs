//! Synthetic dance corpus: per-joint sums of bin-aligned sinusoids with
//! Gaussian bumps on a subset of joints.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BumpEvent, MotionClip, DEFAULT_DT};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub seed: u64,
    pub n_base: usize,
    pub n_joints: usize,
    pub duration_s: f64,
    pub dt: f64,
    /// Fraction of joints per clip that receive an aperiodic bump.
    pub bump_fraction: f64,
    pub with_velocities: bool,
    /// Shortest clip accepted, in frames (the model window).
    pub min_frames: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_base: 34,
            n_joints: 14,
            duration_s: 6.0,
            dt: DEFAULT_DT,
            bump_fraction: 0.3,
            with_velocities: false,
            min_frames: 100,
        }
    }
}

const FREQ_RANGE_HZ: (f64, f64) = (0.5, 3.0);
const MAX_AMPLITUDE: f64 = 0.8;
const BUMP_AMPLITUDE: (f64, f64) = (0.3, 0.8);
const BUMP_WIDTH_S: (f64, f64) = (0.1, 0.3);
const TEMPOS_PER_CLIP: usize = 2;

/// Generates `n_base` clips; clip `i` draws from its own ChaCha stream so the
/// output does not depend on generation order.
pub fn generate_corpus(cfg: &CorpusConfig) -> Result<Vec<MotionClip>> {
    if cfg.n_base == 0 || cfg.n_joints == 0 || !(cfg.duration_s > 0.0) || !(cfg.dt > 0.0) {
        return Err(Error::invalid("corpus dimensions must be positive"));
    }
    if !(0.0..=1.0).contains(&cfg.bump_fraction) {
        return Err(Error::invalid("bump fraction must lie in [0, 1]"));
    }
    let frames = (cfg.duration_s / cfg.dt).round() as usize;
    if frames < cfg.min_frames {
        return Err(Error::invalid(format!(
            "duration {} s gives {frames} frames, fewer than the {}-frame window",
            cfg.duration_s, cfg.min_frames
        )));
    }
    let span = frames as f64 * cfg.dt;
    // integer cycles per clip keeps every component on an FFT bin and loop-seamless
    let m_lo = (FREQ_RANGE_HZ.0 * span).ceil().max(1.0) as usize;
    let m_hi = (FREQ_RANGE_HZ.1 * span).floor() as usize;
    if m_hi < m_lo {
        return Err(Error::invalid(
            "clip too short to hold a 0.5-3 Hz component",
        ));
    }
    Ok((0..cfg.n_base)
        .map(|i| generate_clip(cfg, i, frames, span, m_lo, m_hi))
        .collect())
}

fn generate_clip(
    cfg: &CorpusConfig,
    index: usize,
    frames: usize,
    span: f64,
    m_lo: usize,
    m_hi: usize,
) -> MotionClip {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);

    // joints of one dance share a small set of tempos
    let palette: Vec<usize> = (0..TEMPOS_PER_CLIP)
        .map(|_| rng.gen_range(m_lo..=m_hi))
        .collect();
    let mut pos = Matrix::zeros(cfg.n_joints, frames);
    for j in 0..cfg.n_joints {
        let n_comp = rng.gen_range(1..=3);
        for _ in 0..n_comp {
            let cycles = palette[rng.gen_range(0..palette.len())] as f64;
            let freq = cycles / span;
            let amp = rng.gen_range(0.1..=MAX_AMPLITUDE) / n_comp as f64;
            let phase = rng.gen_range(0.0..2.0 * PI);
            for (k, v) in pos.row_mut(j).iter_mut().enumerate() {
                *v += amp * (2.0 * PI * freq * k as f64 * cfg.dt + phase).sin();
            }
        }
    }

    let n_bumps = (cfg.bump_fraction * cfg.n_joints as f64).round() as usize;
    let mut joints: Vec<usize> = (0..cfg.n_joints).collect();
    joints.shuffle(&mut rng);
    let mut events = Vec::with_capacity(n_bumps);
    for &joint in joints.iter().take(n_bumps) {
        let ev = BumpEvent {
            joint,
            center_s: rng.gen_range(0.2 * span..=0.8 * span),
            width_s: rng.gen_range(BUMP_WIDTH_S.0..=BUMP_WIDTH_S.1),
            amplitude: rng.gen_range(BUMP_AMPLITUDE.0..=BUMP_AMPLITUDE.1),
        };
        for (k, v) in pos.row_mut(joint).iter_mut().enumerate() {
            let t = k as f64 * cfg.dt - ev.center_s;
            *v += ev.amplitude * (-t * t / (2.0 * ev.width_s * ev.width_s)).exp();
        }
        events.push(ev);
    }
    events.sort_by_key(|e| e.joint);

    let id = format!("dance{index:02}");
    let states = with_velocity_rows(pos, cfg.dt, cfg.with_velocities);
    MotionClip {
        name: format!("{id}_x1"),
        base_motion_id: id,
        freq_factor: 1.0,
        dt: cfg.dt,
        n_joints: cfg.n_joints,
        with_velocities: cfg.with_velocities,
        states,
        events,
    }
}

pub(super) fn with_velocity_rows(pos: Matrix<f64>, dt: f64, with_velocities: bool) -> Matrix<f64> {
    if !with_velocities {
        return pos;
    }
    let vel = MotionClip::finite_difference_velocities(&pos, dt);
    let (n, t) = pos.shape();
    let mut data = pos.into_vec();
    data.extend(vel.into_vec());
    Matrix::from_vec(2 * n, t, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::rfft;

    #[test]
    fn standard_corpus_shape() {
        let clips = generate_corpus(&CorpusConfig::default()).unwrap();
        assert_eq!(clips.len(), 34);
        for c in &clips {
            assert_eq!(c.states.shape(), (14, 600));
            assert_eq!(c.dt, 0.01);
            c.validate().unwrap();
            assert_eq!(c.events.len(), 4);
            assert!(c
                .states
                .as_slice()
                .iter()
                .all(|v| v.abs() < 0.8 + 0.8 + 1e-9));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = CorpusConfig {
            n_base: 3,
            ..Default::default()
        };
        assert_eq!(
            generate_corpus(&cfg).unwrap(),
            generate_corpus(&cfg).unwrap()
        );
        let other = generate_corpus(&CorpusConfig {
            seed: 8,
            ..cfg.clone()
        })
        .unwrap();
        assert_ne!(other[0].states, generate_corpus(&cfg).unwrap()[0].states);
        // a clip does not depend on how many clips precede or follow it
        let more = generate_corpus(&CorpusConfig {
            n_base: 5,
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(more[2], generate_corpus(&cfg).unwrap()[2]);
    }

    #[test]
    fn sinusoid_only_rows_live_on_generator_bins() {
        let cfg = CorpusConfig {
            n_base: 1,
            bump_fraction: 0.0,
            ..Default::default()
        };
        let clip = &generate_corpus(&cfg).unwrap()[0];
        assert!(clip.events.is_empty());
        // bins 3..=18 correspond to 0.5..3 Hz over 6 s
        for r in 0..clip.dims() {
            let spec = rfft(clip.states.row(r)).unwrap();
            let total: f64 = spec.coeffs.iter().map(|c| c.norm_sqr()).sum();
            let in_band: f64 = spec.coeffs[3..=18].iter().map(|c| c.norm_sqr()).sum();
            assert!(
                total - in_band < 1e-18 * spec.coeffs.len() as f64 + 1e-12 * total,
                "row {r}"
            );
            let peaks = spec.coeffs.iter().filter(|c| c.norm() > 1e-6).count();
            assert!((1..=3).contains(&peaks), "row {r} has {peaks} active bins");
        }
    }

    #[test]
    fn shortest_clip_is_one_window() {
        let cfg = CorpusConfig {
            n_base: 1,
            duration_s: 1.0,
            ..Default::default()
        };
        let clip = &generate_corpus(&cfg).unwrap()[0];
        assert_eq!(clip.frames(), 100);
        assert!(generate_corpus(&CorpusConfig {
            duration_s: 0.99,
            ..cfg
        })
        .is_err());
    }

    #[test]
    fn rejects_non_positive_dimensions() {
        assert!(generate_corpus(&CorpusConfig {
            n_base: 0,
            ..Default::default()
        })
        .is_err());
        assert!(generate_corpus(&CorpusConfig {
            n_joints: 0,
            ..Default::default()
        })
        .is_err());
        assert!(generate_corpus(&CorpusConfig {
            duration_s: -1.0,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn velocity_rows_are_centered_differences() {
        let cfg = CorpusConfig {
            n_base: 2,
            with_velocities: true,
            ..Default::default()
        };
        for clip in generate_corpus(&cfg).unwrap() {
            clip.validate().unwrap();
            assert_eq!(clip.dims(), 28);
            for j in 0..14 {
                let x = clip.states.row(j);
                let v = clip.states.row(14 + j);
                for k in 1..clip.frames() - 1 {
                    assert!((v[k] - (x[k + 1] - x[k - 1]) / 0.02).abs() < 1e-6);
                }
            }
        }
    }
}
