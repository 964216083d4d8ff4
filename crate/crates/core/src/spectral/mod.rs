//! Real FFT and the differentiable frequency/amplitude/offset extraction
//! applied to every latent curve.
//!
//! For a real curve `x` of even length `H` with spectrum `c_k`:
//!
//! * `p_k = |c_k|²` for `k = 1..=H/2` (DC excluded, Nyquist included)
//! * `f = Σ ν_k p_k / Σ p_k` with `ν_k = k / (H·dt)`
//! * `a = 2·sqrt(Σ p_k) / H`
//! * `b = Re(c_0) / H`
//!
//! When the AC power falls below [`POWER_EPS`] the frequency is pinned to 0 and
//! neither `f` nor `a` propagates gradient.

mod fft;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use fft::{naive_dft, FftPlan};

/// Below this total AC power a curve counts as silent.
pub const POWER_EPS: f64 = 1e-12;

/// Nonnegative-frequency half of the DFT of a real curve, `H/2 + 1` bins.
#[derive(Clone, Debug, PartialEq)]
pub struct RealSpectrum<T> {
    pub coeffs: Vec<Complex<T>>,
}

impl<T: Scalar> RealSpectrum<T> {
    /// Length of the real curve this spectrum came from.
    pub fn signal_len(&self) -> usize {
        2 * (self.coeffs.len() - 1)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams<T> {
    /// Hz
    pub f: T,
    pub a: T,
    pub b: T,
}

/// Reusable real FFT for one even length.
#[derive(Clone, Debug)]
pub struct RealFft<T: Scalar> {
    plan: FftPlan<T>,
}

impl<T: Scalar> RealFft<T> {
    pub fn new(len: usize) -> Result<Self> {
        if len < 4 || len % 2 != 0 {
            return Err(Error::invalid(format!(
                "real FFT length must be even and >= 4, got {len}"
            )));
        }
        Ok(Self {
            plan: FftPlan::new(len),
        })
    }

    pub fn len(&self) -> usize {
        self.plan.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plan.is_empty()
    }

    pub fn forward(&self, x: &[T]) -> Result<RealSpectrum<T>> {
        if x.len() != self.len() {
            return Err(Error::invalid(format!(
                "curve length {} != FFT length {}",
                x.len(),
                self.len()
            )));
        }
        let input: Vec<_> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
        let mut full = self.plan.forward(&input);
        full.truncate(self.len() / 2 + 1);
        // the DC bin of a real signal is real; drop rounding residue
        full[0].im = T::zero();
        Ok(RealSpectrum { coeffs: full })
    }

    pub fn inverse(&self, spec: &RealSpectrum<T>) -> Result<Vec<T>> {
        let n = self.len();
        if spec.coeffs.len() != n / 2 + 1 {
            return Err(Error::invalid(format!(
                "spectrum has {} bins, expected {}",
                spec.coeffs.len(),
                n / 2 + 1
            )));
        }
        let mut full = Vec::with_capacity(n);
        full.extend_from_slice(&spec.coeffs);
        for k in (1..n / 2).rev() {
            full.push(spec.coeffs[k].conj());
        }
        let inv = T::one() / T::of_usize(n);
        Ok(self
            .plan
            .inverse_unnormalized(&full)
            .into_iter()
            .map(|c| c.re * inv)
            .collect())
    }
}

/// Unnormalized forward real FFT.
pub fn rfft<T: Scalar>(x: &[T]) -> Result<RealSpectrum<T>> {
    RealFft::new(x.len())?.forward(x)
}

pub fn irfft<T: Scalar>(spec: &RealSpectrum<T>) -> Result<Vec<T>> {
    RealFft::new(spec.signal_len())?.inverse(spec)
}

/// Parameter extraction for curves of one fixed length and timestep.
#[derive(Clone, Debug)]
pub struct SpectralExtractor<T: Scalar> {
    fft: RealFft<T>,
    bin_freqs: Vec<T>,
    dt: T,
}

impl<T: Scalar> SpectralExtractor<T> {
    pub fn new(len: usize, dt: T) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::invalid("dt must be positive"));
        }
        let fft = RealFft::new(len)?;
        let span = T::of_usize(len) * dt;
        let bin_freqs = (0..=len / 2).map(|k| T::of_usize(k) / span).collect();
        Ok(Self { fft, bin_freqs, dt })
    }

    pub fn len(&self) -> usize {
        self.fft.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fft.is_empty()
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// `ν_k` for `k = 0..=H/2`.
    pub fn bin_freqs(&self) -> &[T] {
        &self.bin_freqs
    }

    pub fn fft(&self) -> &RealFft<T> {
        &self.fft
    }

    /// Returns the parameters together with the spectrum, which the adjoint reuses.
    pub fn extract(&self, curve: &[T]) -> Result<(SpectralParams<T>, RealSpectrum<T>)> {
        let spec = self.fft.forward(curve)?;
        Ok((self.params_from_spectrum(&spec), spec))
    }

    pub fn params_from_spectrum(&self, spec: &RealSpectrum<T>) -> SpectralParams<T> {
        let h = T::of_usize(self.len());
        let (mut power, mut weighted) = (T::zero(), T::zero());
        for k in 1..spec.coeffs.len() {
            let p = spec.coeffs[k].norm_sqr();
            power += p;
            weighted += self.bin_freqs[k] * p;
        }
        let f = if power < T::of(POWER_EPS) {
            T::zero()
        } else {
            weighted / power
        };
        SpectralParams {
            f,
            a: T::of(2.0) * power.sqrt() / h,
            b: spec.coeffs[0].re / h,
        }
    }

    /// Gradient of `up.f·f + up.a·a + up.b·b` with respect to the curve.
    pub fn adjoint(
        &self,
        spec: &RealSpectrum<T>,
        params: &SpectralParams<T>,
        up: &SpectralParams<T>,
    ) -> Vec<T> {
        let n = self.len();
        let h = T::of_usize(n);
        let power: T = spec.coeffs[1..].iter().map(|c| c.norm_sqr()).sum();
        let mut out = vec![up.b / h; n];
        if power < T::of(POWER_EPS) {
            return out;
        }
        let amp_term = up.a / (h * power.sqrt());
        let zero = Complex::new(T::zero(), T::zero());
        // conj(G_k) with G_k = (∂/∂p_k)·c_k, zero outside 1..=H/2
        let mut g = vec![zero; n];
        for k in 1..spec.coeffs.len() {
            let dp = up.f * (self.bin_freqs[k] - params.f) / power + amp_term;
            g[k] = (spec.coeffs[k] * dp).conj();
        }
        // Σ_k G_k e^{+iθ} = conj(FFT(conj G)); only the real part is needed
        let two = T::of(2.0);
        for (o, z) in out.iter_mut().zip(self.fft.plan.forward(&g)) {
            *o += two * z.re;
        }
        out
    }
}

/// Convenience wrapper building a one-off extractor.
pub fn extract_params<T: Scalar>(curve: &[T], dt: T) -> Result<SpectralParams<T>> {
    Ok(SpectralExtractor::new(curve.len(), dt)?.extract(curve)?.0)
}

pub fn extract_params_adjoint<T: Scalar>(
    curve: &[T],
    dt: T,
    upstream: &SpectralParams<T>,
) -> Result<Vec<T>> {
    let ex = SpectralExtractor::new(curve.len(), dt)?;
    let (params, spec) = ex.extract(curve)?;
    Ok(ex.adjoint(&spec, &params, upstream))
}
