use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// 1-D convolution, weights laid out `[out][in][tap]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d<T> {
    pub out_ch: usize,
    pub in_ch: usize,
    pub kernel: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv1d<T> {
    pub fn zeros(out_ch: usize, in_ch: usize, kernel: usize) -> Self {
        Self {
            out_ch,
            in_ch,
            kernel,
            weight: vec![T::zero(); out_ch * in_ch * kernel],
            bias: vec![T::zero(); out_ch],
        }
    }

    pub fn w(&self, o: usize, i: usize, m: usize) -> T {
        self.weight[(o * self.in_ch + i) * self.kernel + m]
    }

    /// Taps for output `o`, input `i`.
    pub fn taps(&self, o: usize, i: usize) -> &[T] {
        let s = (o * self.in_ch + i) * self.kernel;
        &self.weight[s..s + self.kernel]
    }

    fn init(&mut self, rng: &mut ChaCha8Rng) {
        let bound = 1.0 / ((self.in_ch * self.kernel) as f64).sqrt();
        for w in self.weight.iter_mut().chain(self.bias.iter_mut()) {
            *w = T::of(rng.gen_range(-bound..bound));
        }
    }
}

/// Per-channel linear maps from a latent curve to a 2-D phase shift `(sx, sy)`.
///
/// Weights laid out `[channel][component][sample]`, bias `[channel][component]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseHeads<T> {
    pub channels: usize,
    pub window: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> PhaseHeads<T> {
    pub fn zeros(channels: usize, window: usize) -> Self {
        Self {
            channels,
            window,
            weight: vec![T::zero(); channels * 2 * window],
            bias: vec![T::zero(); channels * 2],
        }
    }

    pub fn row(&self, ch: usize, comp: usize) -> &[T] {
        let s = (ch * 2 + comp) * self.window;
        &self.weight[s..s + self.window]
    }

    fn init(&mut self, rng: &mut ChaCha8Rng) {
        let bound = 1.0 / (self.window as f64).sqrt();
        for w in self.weight.iter_mut().chain(self.bias.iter_mut()) {
            *w = T::of(rng.gen_range(-bound..bound));
        }
    }
}

/// All trainable weights. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub enc_conv1: Conv1d<T>,
    pub enc_conv2: Conv1d<T>,
    pub phase_heads: PhaseHeads<T>,
    pub dec_conv1: Conv1d<T>,
    pub dec_conv2: Conv1d<T>,
}

/// Canonical tensor order used by checkpoints and the optimizer.
pub const TENSOR_NAMES: [&str; 10] = [
    "enc_conv1.weight",
    "enc_conv1.bias",
    "enc_conv2.weight",
    "enc_conv2.bias",
    "phase_heads.weight",
    "phase_heads.bias",
    "dec_conv1.weight",
    "dec_conv1.bias",
    "dec_conv2.weight",
    "dec_conv2.bias",
];

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let k = cfg.kernel;
        Self {
            enc_conv1: Conv1d::zeros(cfg.hidden, cfg.d, k),
            enc_conv2: Conv1d::zeros(cfg.c, cfg.hidden, k),
            phase_heads: PhaseHeads::zeros(cfg.c, cfg.window),
            dec_conv1: Conv1d::zeros(cfg.hidden, cfg.c, k),
            dec_conv2: Conv1d::zeros(cfg.d, cfg.hidden, k),
        }
    }

    /// Uniform `±1/sqrt(fan_in)` initialization, seeded.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut p = Self::zeros(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        p.enc_conv1.init(&mut rng);
        p.enc_conv2.init(&mut rng);
        p.phase_heads.init(&mut rng);
        p.dec_conv1.init(&mut rng);
        p.dec_conv2.init(&mut rng);
        p
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.iter_mut().for_each(|v| *v = T::zero());
        }
        z
    }

    pub fn tensors(&self) -> [(&'static str, &[T]); 10] {
        [
            (TENSOR_NAMES[0], &self.enc_conv1.weight),
            (TENSOR_NAMES[1], &self.enc_conv1.bias),
            (TENSOR_NAMES[2], &self.enc_conv2.weight),
            (TENSOR_NAMES[3], &self.enc_conv2.bias),
            (TENSOR_NAMES[4], &self.phase_heads.weight),
            (TENSOR_NAMES[5], &self.phase_heads.bias),
            (TENSOR_NAMES[6], &self.dec_conv1.weight),
            (TENSOR_NAMES[7], &self.dec_conv1.bias),
            (TENSOR_NAMES[8], &self.dec_conv2.weight),
            (TENSOR_NAMES[9], &self.dec_conv2.bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Vec<T>); 10] {
        [
            (TENSOR_NAMES[0], &mut self.enc_conv1.weight),
            (TENSOR_NAMES[1], &mut self.enc_conv1.bias),
            (TENSOR_NAMES[2], &mut self.enc_conv2.weight),
            (TENSOR_NAMES[3], &mut self.enc_conv2.bias),
            (TENSOR_NAMES[4], &mut self.phase_heads.weight),
            (TENSOR_NAMES[5], &mut self.phase_heads.bias),
            (TENSOR_NAMES[6], &mut self.dec_conv1.weight),
            (TENSOR_NAMES[7], &mut self.dec_conv1.bias),
            (TENSOR_NAMES[8], &mut self.dec_conv2.weight),
            (TENSOR_NAMES[9], &mut self.dec_conv2.bias),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Concatenation in canonical order.
    pub fn to_flat(&self) -> Vec<T> {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter().copied())
            .collect()
    }

    pub fn load_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::invalid(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut at = 0;
        for (_, t) in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(())
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.tensors()
            .iter()
            .find(|(_, t)| t.iter().any(|v| !v.is_finite()))
            .map(|(n, _)| *n)
    }

    pub fn add_assign(&mut self, other: &Self) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += *y);
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let conv = |c: &Conv1d<T>| Conv1d {
            out_ch: c.out_ch,
            in_ch: c.in_ch,
            kernel: c.kernel,
            weight: c.weight.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
            bias: c.bias.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
        };
        ModelParams {
            enc_conv1: conv(&self.enc_conv1),
            enc_conv2: conv(&self.enc_conv2),
            phase_heads: PhaseHeads {
                channels: self.phase_heads.channels,
                window: self.phase_heads.window,
                weight: self
                    .phase_heads
                    .weight
                    .iter()
                    .map(|v| U::of(v.to_f64_lossy()))
                    .collect(),
                bias: self
                    .phase_heads
                    .bias
                    .iter()
                    .map(|v| U::of(v.to_f64_lossy()))
                    .collect(),
            },
            dec_conv1: conv(&self.dec_conv1),
            dec_conv2: conv(&self.dec_conv2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_round_trip_and_counts() {
        let cfg = ModelConfig {
            d: 3,
            c: 2,
            window: 8,
            hidden: 4,
            kernel: 5,
            ..Default::default()
        };
        let p = ModelParams::<f64>::init(&cfg, 1);
        let expected =
            4 * 3 * 5 + 4 + 2 * 4 * 5 + 2 + 2 * 2 * 8 + 4 + 4 * 2 * 5 + 4 + 3 * 4 * 5 + 3;
        assert_eq!(p.num_params(), expected);
        let mut q = p.zeros_like();
        q.load_flat(&p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert!(q.load_flat(&[0.0; 3]).is_err());
        assert_eq!(ModelParams::<f64>::init(&cfg, 1), p);
        assert_ne!(ModelParams::<f64>::init(&cfg, 2), p);
    }

    #[test]
    fn init_bounds() {
        let cfg = ModelConfig::default();
        let p = ModelParams::<f64>::init(&cfg, 9);
        let bound = 1.0 / ((14 * 51) as f64).sqrt();
        assert!(p.enc_conv1.weight.iter().all(|w| w.abs() <= bound));
        assert!(p.first_non_finite().is_none());
    }
}
