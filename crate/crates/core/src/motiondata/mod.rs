//! Trajectory containers, the synthetic dance corpus, frequency augmentation,
//! normalization and the on-disk clip/dataset formats.

mod augment;
mod generate;
mod io;
mod norm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub use augment::{augment_frequencies, DEFAULT_FACTORS};
pub use generate::{generate_corpus, CorpusConfig};
pub use io::{
    load_clip, load_dataset, save_clip, save_dataset, write_clip_csv, ClipEntry, DatasetManifest,
    CLIP_MAGIC, CLIP_VERSION,
};
pub use norm::NormStats;

/// Default control/sample period, seconds.
pub const DEFAULT_DT: f64 = 0.01;

/// A localized, non-periodic feature stamped onto one joint (a leg lift, say).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpEvent {
    pub joint: usize,
    /// Seconds from the start of the clip.
    pub center_s: f64,
    pub width_s: f64,
    pub amplitude: f64,
}

impl BumpEvent {
    /// Interval where the bump exceeds ~1% of its peak.
    pub fn support(&self) -> (f64, f64) {
        (
            self.center_s - 3.0 * self.width_s,
            self.center_s + 3.0 * self.width_s,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionClip {
    pub name: String,
    pub base_motion_id: String,
    pub freq_factor: f64,
    pub dt: f64,
    pub n_joints: usize,
    /// Rows `n_joints..2*n_joints` hold joint velocities when set.
    pub with_velocities: bool,
    /// `d × T`, joint values in rad (and rad/s for velocity rows).
    pub states: Matrix<f64>,
    pub events: Vec<BumpEvent>,
}

impl MotionClip {
    pub fn frames(&self) -> usize {
        self.states.cols()
    }

    pub fn dims(&self) -> usize {
        self.states.rows()
    }

    pub fn duration_s(&self) -> f64 {
        self.frames() as f64 * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid(format!(
                "clip {}: dt must be positive",
                self.name
            )));
        }
        let expected = if self.with_velocities {
            2 * self.n_joints
        } else {
            self.n_joints
        };
        if self.dims() != expected {
            return Err(Error::invalid(format!(
                "clip {}: {} rows, expected {expected}",
                self.name,
                self.dims()
            )));
        }
        if !self.states.all_finite() {
            return Err(Error::invalid(format!(
                "clip {}: non-finite state",
                self.name
            )));
        }
        Ok(())
    }

    /// Joint position rows only.
    pub fn positions(&self) -> Matrix<f64> {
        if !self.with_velocities {
            return self.states.clone();
        }
        let mut out = Matrix::zeros(self.n_joints, self.frames());
        for r in 0..self.n_joints {
            out.row_mut(r).copy_from_slice(self.states.row(r));
        }
        out
    }

    /// The rows the model consumes: positions, optionally followed by velocities.
    pub fn model_states(&self, include_velocities: bool) -> Result<Matrix<f64>> {
        if include_velocities {
            if !self.with_velocities {
                return Err(Error::invalid(format!(
                    "clip {} carries no velocity rows",
                    self.name
                )));
            }
            Ok(self.states.clone())
        } else {
            Ok(self.positions())
        }
    }

    /// Window of `h` columns ending at column `end` (inclusive).
    pub fn segment_at(&self, end: usize, h: usize) -> Result<TrajectorySegment<f64>> {
        segment_of(&self.states, self.dt, end, h)
    }

    /// Centered finite difference of each position row; one-sided at the ends.
    pub fn finite_difference_velocities(positions: &Matrix<f64>, dt: f64) -> Matrix<f64> {
        let (rows, t) = positions.shape();
        let mut out = Matrix::zeros(rows, t);
        if t < 2 {
            return out;
        }
        for r in 0..rows {
            let x = positions.row(r);
            let v = out.row_mut(r);
            v[0] = (x[1] - x[0]) / dt;
            v[t - 1] = (x[t - 1] - x[t - 2]) / dt;
            for j in 1..t - 1 {
                v[j] = (x[j + 1] - x[j - 1]) / (2.0 * dt);
            }
        }
        out
    }
}

/// `d × H` window `s_t = (s_{t-H+1}, …, s_t)`, columns oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySegment<T> {
    pub values: Matrix<T>,
    pub dt: f64,
    /// Index `t` of the newest column within its source.
    pub end_time_index: usize,
}

impl<T: Scalar> TrajectorySegment<T> {
    pub fn window(&self) -> usize {
        self.values.cols()
    }

    pub fn dims(&self) -> usize {
        self.values.rows()
    }

    pub fn cast<U: Scalar>(&self) -> TrajectorySegment<U> {
        TrajectorySegment {
            values: self.values.cast(),
            dt: self.dt,
            end_time_index: self.end_time_index,
        }
    }

    /// Newest column.
    pub fn last_column(&self) -> Vec<T> {
        self.values.column(self.window() - 1)
    }
}

/// Window of `h` columns of `states` ending at column `end`.
pub fn segment_of<T: Scalar>(
    states: &Matrix<T>,
    dt: f64,
    end: usize,
    h: usize,
) -> Result<TrajectorySegment<T>> {
    if h == 0 || end + 1 < h || end >= states.cols() {
        return Err(Error::invalid(format!(
            "window of {h} ending at {end} does not fit {} frames",
            states.cols()
        )));
    }
    Ok(TrajectorySegment {
        values: states.columns(end + 1 - h, h),
        dt,
        end_time_index: end,
    })
}

/// All `T - H + 1` stride-1 windows of a clip, oldest first.
pub fn segments(
    clip: &MotionClip,
    h: usize,
) -> Result<impl Iterator<Item = TrajectorySegment<f64>> + '_> {
    if h == 0 || h > clip.frames() {
        return Err(Error::invalid(format!(
            "window {h} longer than clip {} ({} frames)",
            clip.name,
            clip.frames()
        )));
    }
    Ok((h - 1..clip.frames()).map(move |end| TrajectorySegment {
        values: clip.states.columns(end + 1 - h, h),
        dt: clip.dt,
        end_time_index: end,
    }))
}
