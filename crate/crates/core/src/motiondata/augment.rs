//! Time-warp frequency augmentation, `y(t) = x(k·t)`.

use super::generate::with_velocity_rows;
use super::{BumpEvent, MotionClip};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// The five frequency variations applied to every base motion.
pub const DEFAULT_FACTORS: [f64; 5] = [0.5, 0.75, 1.0, 1.25, 1.5];

/// Warps each clip by each factor, keeping the original duration.
///
/// `k < 1` reads only the first `k·T` source frames; `k > 1` runs past the end
/// and wraps around to the start of the source. Samples are linearly
/// interpolated; velocity rows are recomputed from the warped positions.
pub fn augment_frequencies(clips: &[MotionClip], factors: &[f64]) -> Result<Vec<MotionClip>> {
    if let Some(k) = factors.iter().find(|k| !(**k > 0.0) || !k.is_finite()) {
        return Err(Error::invalid(format!(
            "frequency factor must be positive, got {k}"
        )));
    }
    let mut out = Vec::with_capacity(clips.len() * factors.len());
    for clip in clips {
        for &k in factors {
            out.push(warp(clip, k));
        }
    }
    Ok(out)
}

fn warp(clip: &MotionClip, k: f64) -> MotionClip {
    let t = clip.frames();
    let pos = clip.positions();
    let warped = if k == 1.0 {
        pos
    } else {
        let mut w = Matrix::zeros(pos.rows(), t);
        for j in 0..t {
            let u = (k * j as f64) % t as f64;
            let i0 = u.floor() as usize;
            let frac = u - i0 as f64;
            let i0 = i0 % t;
            let i1 = (i0 + 1) % t;
            for r in 0..pos.rows() {
                let x = pos.row(r);
                let v = if frac == 0.0 {
                    x[i0]
                } else {
                    x[i0] + frac * (x[i1] - x[i0])
                };
                w.set(r, j, v);
            }
        }
        w
    };
    let states = if k == 1.0 {
        clip.states.clone()
    } else {
        with_velocity_rows(warped, clip.dt, clip.with_velocities)
    };

    let span = clip.duration_s();
    let mut events = Vec::new();
    for ev in &clip.events {
        // each source occurrence at center + m·span lands at that time / k
        let mut m = 0.0;
        loop {
            let center = (ev.center_s + m * span) / k;
            if center >= span {
                break;
            }
            events.push(BumpEvent {
                joint: ev.joint,
                center_s: center,
                width_s: ev.width_s / k,
                amplitude: ev.amplitude,
            });
            m += 1.0;
        }
    }
    events.sort_by(|a, b| {
        (a.joint, a.center_s)
            .partial_cmp(&(b.joint, b.center_s))
            .unwrap()
    });

    MotionClip {
        name: format!("{}_x{k}", clip.base_motion_id),
        base_motion_id: clip.base_motion_id.clone(),
        freq_factor: clip.freq_factor * k,
        dt: clip.dt,
        n_joints: clip.n_joints,
        with_velocities: clip.with_velocities,
        states,
        events,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motiondata::{generate_corpus, CorpusConfig};
    use crate::spectral::rfft;
    use std::f64::consts::PI;

    fn sine_clip(freq: f64) -> MotionClip {
        MotionClip {
            name: "sine".into(),
            base_motion_id: "sine".into(),
            freq_factor: 1.0,
            dt: 0.01,
            n_joints: 1,
            with_velocities: false,
            states: Matrix::from_fn(1, 600, |_, j| (2.0 * PI * freq * j as f64 * 0.01).sin()),
            events: vec![],
        }
    }

    #[test]
    fn default_factors_on_standard_corpus() {
        let base = generate_corpus(&CorpusConfig::default()).unwrap();
        let aug = augment_frequencies(&base, &DEFAULT_FACTORS).unwrap();
        assert_eq!(aug.len(), 170);
        assert!(aug.iter().all(|c| c.frames() == 600));
        for id in base.iter().map(|c| &c.base_motion_id) {
            let mut f: Vec<f64> = aug
                .iter()
                .filter(|c| &c.base_motion_id == id)
                .map(|c| c.freq_factor)
                .collect();
            f.sort_by(f64::total_cmp);
            assert_eq!(f, DEFAULT_FACTORS.to_vec());
        }
    }

    #[test]
    fn unit_factor_is_bitwise_copy() {
        let base = generate_corpus(&CorpusConfig {
            n_base: 2,
            with_velocities: true,
            ..Default::default()
        })
        .unwrap();
        let aug = augment_frequencies(&base, &[1.0]).unwrap();
        for (a, b) in aug.iter().zip(&base) {
            let bits =
                |m: &Matrix<f64>| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.states), bits(&b.states));
            assert_eq!(a.events, b.events);
        }
    }

    #[test]
    fn rejects_non_positive_factor() {
        assert!(augment_frequencies(&[sine_clip(1.0)], &[1.0, 0.0]).is_err());
        assert!(augment_frequencies(&[sine_clip(1.0)], &[-0.5]).is_err());
    }

    #[test]
    fn warped_sinusoid_peaks_at_scaled_frequency() {
        let out = augment_frequencies(&[sine_clip(1.0)], &[1.5]).unwrap();
        let spec = rfft(out[0].states.row(0)).unwrap();
        let peak = (1..spec.coeffs.len())
            .max_by(|&a, &b| spec.coeffs[a].norm().total_cmp(&spec.coeffs[b].norm()))
            .unwrap();
        let peak_hz = peak as f64 / 6.0;
        assert!(
            (peak_hz - 1.5).abs() <= 1.0 / 6.0 + 1e-12,
            "peak at {peak_hz} Hz"
        );
    }

    #[test]
    fn warp_matches_analytic_sinusoid() {
        for &k in &DEFAULT_FACTORS {
            let out = &augment_frequencies(&[sine_clip(1.0)], &[k]).unwrap()[0];
            let err = (0..600)
                .map(|j| (out.states.get(0, j) - (2.0 * PI * k * j as f64 * 0.01).sin()).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-3, "k={k}: {err}");
        }
        // general bound for linear interpolation: dt²/8 · max|x''|
        for &f in &[2.0, 3.0] {
            let out = &augment_frequencies(&[sine_clip(f)], &[1.25]).unwrap()[0];
            let bound = 1e-4 / 8.0 * (2.0 * PI * f).powi(2) + 1e-12;
            let err = (0..600)
                .map(|j| {
                    (out.states.get(0, j) - (2.0 * PI * f * 1.25 * j as f64 * 0.01).sin()).abs()
                })
                .fold(0.0, f64::max);
            assert!(err <= bound, "f={f}: {err} > {bound}");
        }
    }

    #[test]
    fn events_follow_the_warp() {
        let mut clip = sine_clip(1.0);
        clip.events.push(BumpEvent {
            joint: 0,
            center_s: 1.0,
            width_s: 0.2,
            amplitude: 0.5,
        });
        let out = augment_frequencies(&[clip], &[0.5, 1.5]).unwrap();
        assert_eq!(out[0].events.len(), 1);
        assert!((out[0].events[0].center_s - 2.0).abs() < 1e-12);
        // the looped source repeats the bump at (1 + 6) / 1.5
        let centers: Vec<f64> = out[1].events.iter().map(|e| e.center_s).collect();
        assert_eq!(centers.len(), 2);
        assert!((centers[0] - 1.0 / 1.5).abs() < 1e-12 && (centers[1] - 7.0 / 1.5).abs() < 1e-12);
        assert!((out[1].events[0].width_s - 0.2 / 1.5).abs() < 1e-12);
    }
}
