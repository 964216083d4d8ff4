//! Adam with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pae::ModelParams;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment buffers shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub first: ModelParams<T>,
    pub second: ModelParams<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        Self {
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam step; the decay term uses the pre-step parameters,
/// `p ← p − lr·m̂/(√v̂ + ε) − lr·wd·p`.
///
/// Non-finite gradients abort before anything is modified.
pub fn adam_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NumericFailure {
            layer: format!("gradient of {name}"),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let one = T::one();
    let c1 = one - b1.powi(t);
    let c2 = one - b2.powi(t);
    let (lr, decay, eps) = (
        T::of(cfg.lr),
        T::of(cfg.lr * cfg.weight_decay),
        T::of(cfg.eps),
    );
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.first.tensors_mut())
        .zip(state.second.tensors_mut());
    for ((((_, p), (_, g)), (_, m)), (_, v)) in tensors {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let update = lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            *p = *p - update - decay * *p;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pae::ModelConfig;

    fn scalar_model() -> (ModelConfig, ModelParams<f64>) {
        let cfg = ModelConfig {
            d: 1,
            c: 1,
            window: 4,
            hidden: 1,
            kernel: 1,
            ..Default::default()
        };
        (cfg.clone(), ModelParams::zeros(&cfg))
    }

    #[test]
    fn single_step_matches_hand_computation() {
        let (_, mut p) = scalar_model();
        p.enc_conv1.weight[0] = 1.0;
        let mut g = p.zeros_like();
        g.enc_conv1.weight[0] = 1.0;
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, &AdamConfig::default()).unwrap();
        let expect = 1.0 - 1e-4 * (1.0 / (1.0 + 1e-8)) - 1e-4 * 5e-4 * 1.0;
        assert!((p.enc_conv1.weight[0] - expect).abs() < 1e-15);
        assert!((p.enc_conv1.weight[0] - 0.99989995).abs() < 1e-12);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_gradient_without_decay_is_fixed_point() {
        let (cfg, _) = scalar_model();
        let mut p = ModelParams::<f64>::init(&cfg, 3);
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        for _ in 0..5 {
            adam_step(&mut p, &before.zeros_like(), &mut st, &cfg).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let (_, mut p) = scalar_model();
        let mut g = p.zeros_like();
        g.dec_conv2.bias[0] = f64::INFINITY;
        let mut st = AdamState::new(&p);
        let before = p.clone();
        match adam_step(&mut p, &g, &mut st, &AdamConfig::default()) {
            Err(Error::NumericFailure { layer }) => assert!(layer.contains("dec_conv2.bias")),
            other => panic!("{other:?}"),
        }
        assert_eq!(p, before);
        assert_eq!(st.step, 0);
    }
}
