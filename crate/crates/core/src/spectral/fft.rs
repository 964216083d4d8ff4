//! Complex FFT plans, backed by `rustfft`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::scalar::Scalar;

/// Forward and inverse transforms of one length.
#[derive(Clone)]
pub struct FftPlan<T: Scalar> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Scalar> fmt::Debug for FftPlan<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FftPlan").field("len", &self.len()).finish()
    }
}

impl<T: Scalar> FftPlan<T> {
    /// Panics on `len == 0`.
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "fft length must be positive");
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform `X_k = Σ_j x_j e^{-2πi jk/n}`.
    pub fn forward(&self, input: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(input.len(), self.len());
        let mut buf = input.to_vec();
        self.forward.process(&mut buf);
        buf
    }

    /// Unnormalized inverse transform `x_j = Σ_k X_k e^{+2πi jk/n}` (no `1/n`).
    pub fn inverse_unnormalized(&self, input: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(input.len(), self.len());
        let mut buf = input.to_vec();
        self.inverse.process(&mut buf);
        buf
    }
}

/// Direct `O(n²)` DFT, the reference the plans are tested against.
pub fn naive_dft<T: Scalar>(input: &[Complex<T>]) -> Vec<Complex<T>> {
    let n = input.len();
    (0..n)
        .map(|k| {
            input
                .iter()
                .enumerate()
                .fold(Complex::new(T::zero(), T::zero()), |acc, (j, x)| {
                    let ang = -2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
                    acc + *x * Complex::new(T::of(ang.cos()), T::of(ang.sin()))
                })
        })
        .collect()
}
