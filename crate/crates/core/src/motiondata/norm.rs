use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Smallest standard deviation kept; constant dimensions are left unscaled.
pub const STD_FLOOR: f64 = 1e-6;

/// Per-dimension statistics mapping raw states to zero mean, unit variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Fits over every frame of every matrix (all must share the row count).
    pub fn fit<'a>(states: impl IntoIterator<Item = &'a Matrix<f64>>) -> Result<Self> {
        let mut iter = states.into_iter().peekable();
        let d = iter
            .peek()
            .ok_or_else(|| Error::invalid("normalization needs at least one clip"))?
            .rows();
        let (mut sum, mut sq, mut count) = (vec![0.0; d], vec![0.0; d], 0usize);
        let all: Vec<&Matrix<f64>> = iter.collect();
        for m in &all {
            if m.rows() != d {
                return Err(Error::invalid("clips disagree on state dimension"));
            }
            count += m.cols();
            for r in 0..d {
                sum[r] += m.row(r).iter().sum::<f64>();
            }
        }
        if count == 0 {
            return Err(Error::invalid("normalization needs at least one frame"));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        // second pass around the mean
        for m in &all {
            for r in 0..d {
                sq[r] += m.row(r).iter().map(|v| (v - mean[r]).powi(2)).sum::<f64>();
            }
        }
        let std = sq
            .iter()
            .map(|s| (s / count as f64).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, m: &Matrix<f64>) -> Matrix<f64> {
        assert_eq!(m.rows(), self.dims());
        Matrix::from_fn(m.rows(), m.cols(), |r, c| {
            (m.get(r, c) - self.mean[r]) / self.std[r]
        })
    }

    pub fn invert(&self, m: &Matrix<f64>) -> Matrix<f64> {
        assert_eq!(m.rows(), self.dims());
        Matrix::from_fn(m.rows(), m.cols(), |r, c| {
            m.get(r, c) * self.std[r] + self.mean[r]
        })
    }

    pub fn invert_vec(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(r, x)| x * self.std[r] + self.mean[r])
            .collect()
    }
}
