//! Encoder, sinusoidal decoder and the N-step forward-prediction loss.

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::conv::{conv_backward, conv_forward, elu_backward, elu_forward};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::motiondata::TrajectorySegment;
use crate::scalar::{wrap_phase, Scalar};
use crate::spectral::{RealSpectrum, SpectralExtractor, SpectralParams};

/// Per-channel phase (cycles, wrapped) and `θ = (f, a, b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentState<T> {
    pub phi: Vec<T>,
    pub theta: Vec<SpectralParams<T>>,
}

impl<T: Scalar> LatentState<T> {
    pub fn zeros(channels: usize) -> Self {
        Self {
            phi: vec![T::zero(); channels],
            theta: vec![SpectralParams::default(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.phi.len()
    }

    pub fn frequencies(&self) -> Vec<T> {
        self.theta.iter().map(|t| t.f).collect()
    }

    pub fn amplitudes(&self) -> Vec<T> {
        self.theta.iter().map(|t| t.a).collect()
    }

    pub fn offsets(&self) -> Vec<T> {
        self.theta.iter().map(|t| t.b).collect()
    }

    /// Phases advanced by `steps` frames at the latent frequency, `θ` untouched.
    pub fn advanced(&self, steps: usize, dt: T) -> Self {
        let s = T::of_usize(steps);
        let phi = self
            .phi
            .iter()
            .zip(&self.theta)
            .map(|(&p, t)| wrap_phase(p + s * t.f * dt))
            .collect();
        Self {
            phi,
            theta: self.theta.clone(),
        }
    }
}

/// Encoder intermediates kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    pub input: Matrix<T>,
    pub hidden_pre: Matrix<T>,
    pub hidden: Matrix<T>,
    /// `c × H` latent curves.
    pub curves: Matrix<T>,
    pub spectra: Vec<RealSpectrum<T>>,
    /// Phase-head outputs `(sx, sy)` per channel.
    pub shifts: Vec<(T, T)>,
}

/// Decoder intermediates for one prediction step.
struct DecodeCache<T> {
    curves: Matrix<T>,
    cos_args: Matrix<T>,
    sin_args: Matrix<T>,
    hidden_pre: Matrix<T>,
    hidden: Matrix<T>,
}

/// One weighted term `weight · MSE(decode(φ + offset·f·dt, θ), s_{t+offset})` of the loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionStep<T> {
    pub offset: usize,
    pub weight: T,
}

/// Configured network: hyperparameters plus precomputed FFT plan and time axis.
#[derive(Clone, Debug)]
pub struct Pae<T: Scalar> {
    cfg: ModelConfig,
    extractor: SpectralExtractor<T>,
    tau: Vec<T>,
    dt: T,
}

fn check_finite<T: Scalar>(m: &Matrix<T>, layer: &str) -> Result<()> {
    if m.all_finite() {
        Ok(())
    } else {
        Err(Error::NumericFailure {
            layer: layer.to_string(),
        })
    }
}

impl<T: Scalar> Pae<T> {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            extractor: SpectralExtractor::new(cfg.window, T::of(cfg.dt))?,
            tau: cfg.tau().into_iter().map(T::of).collect(),
            dt: T::of(cfg.dt),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    fn check_params(&self, params: &ModelParams<T>) -> Result<()> {
        let c = &self.cfg;
        let ok = params.enc_conv1.in_ch == c.d
            && params.enc_conv1.out_ch == c.hidden
            && params.enc_conv1.kernel == c.kernel
            && params.enc_conv2.out_ch == c.c
            && params.phase_heads.channels == c.c
            && params.phase_heads.window == c.window
            && params.dec_conv1.in_ch == c.c
            && params.dec_conv2.out_ch == c.d;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "parameters do not match the model configuration",
            ))
        }
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.shape() != (self.cfg.d, self.cfg.window) {
            return Err(Error::invalid(format!(
                "segment is {}x{}, model expects {}x{}",
                x.rows(),
                x.cols(),
                self.cfg.d,
                self.cfg.window
            )));
        }
        Ok(())
    }

    /// Encodes a normalized `d × H` window.
    pub fn encode(
        &self,
        params: &ModelParams<T>,
        x: &Matrix<T>,
    ) -> Result<(LatentState<T>, ForwardCache<T>)> {
        self.check_params(params)?;
        self.check_input(x)?;
        let hidden_pre = conv_forward(&params.enc_conv1, x);
        check_finite(&hidden_pre, "enc_conv1")?;
        let hidden = elu_forward(&hidden_pre);
        let curves = conv_forward(&params.enc_conv2, &hidden);
        check_finite(&curves, "enc_conv2")?;

        let c = self.cfg.c;
        let mut state = LatentState::zeros(c);
        let mut spectra = Vec::with_capacity(c);
        let mut shifts = Vec::with_capacity(c);
        let heads = &params.phase_heads;
        for ch in 0..c {
            let curve = curves.row(ch);
            let (theta, spec) = self.extractor.extract(curve)?;
            let dot = |w: &[T]| w.iter().zip(curve).map(|(&a, &b)| a * b).sum::<T>();
            let sx = dot(heads.row(ch, 0)) + heads.bias[2 * ch];
            let sy = dot(heads.row(ch, 1)) + heads.bias[2 * ch + 1];
            if !(sx.is_finite() && sy.is_finite()) {
                return Err(Error::NumericFailure {
                    layer: "phase_heads".into(),
                });
            }
            state.phi[ch] = phase_of(sx, sy);
            state.theta[ch] = theta;
            spectra.push(spec);
            shifts.push((sx, sy));
        }
        Ok((
            state,
            ForwardCache {
                input: x.clone(),
                hidden_pre,
                hidden,
                curves,
                spectra,
                shifts,
            },
        ))
    }

    pub fn encode_segment(
        &self,
        params: &ModelParams<T>,
        seg: &TrajectorySegment<T>,
    ) -> Result<LatentState<T>> {
        Ok(self.encode(params, &seg.values)?.0)
    }

    /// Sinusoid curves `a·sin(2π(f·τ_j + φ)) + b`, phases wrapped first.
    pub fn latent_curves(&self, state: &LatentState<T>) -> Matrix<T> {
        self.sinusoids(state).0
    }

    fn sinusoids(&self, state: &LatentState<T>) -> (Matrix<T>, Matrix<T>, Matrix<T>, Vec<T>) {
        let (c, h) = (state.channels(), self.cfg.window);
        let two_pi = T::PI() + T::PI();
        let mut curves = Matrix::zeros(c, h);
        let mut sins = Matrix::zeros(c, h);
        let mut coss = Matrix::zeros(c, h);
        let phases: Vec<T> = state.phi.iter().map(|&p| wrap_phase(p)).collect();
        for ch in 0..c {
            let SpectralParams { f, a, b } = state.theta[ch];
            for j in 0..h {
                let (s, co) = (two_pi * (f * self.tau[j] + phases[ch])).sin_cos();
                sins.set(ch, j, s);
                coss.set(ch, j, co);
                curves.set(ch, j, a * s + b);
            }
        }
        (curves, sins, coss, phases)
    }

    fn decode_cached(
        &self,
        params: &ModelParams<T>,
        state: &LatentState<T>,
    ) -> Result<(Matrix<T>, DecodeCache<T>)> {
        let (curves, sin_args, cos_args, _) = self.sinusoids(state);
        check_finite(&curves, "latent_curves")?;
        let hidden_pre = conv_forward(&params.dec_conv1, &curves);
        check_finite(&hidden_pre, "dec_conv1")?;
        let hidden = elu_forward(&hidden_pre);
        let out = conv_forward(&params.dec_conv2, &hidden);
        check_finite(&out, "dec_conv2")?;
        Ok((
            out,
            DecodeCache {
                curves,
                cos_args,
                sin_args,
                hidden_pre,
                hidden,
            },
        ))
    }

    /// Decodes a latent state into a normalized `d × H` window.
    pub fn decode(&self, params: &ModelParams<T>, state: &LatentState<T>) -> Result<Matrix<T>> {
        self.check_params(params)?;
        if state.channels() != self.cfg.c {
            return Err(Error::invalid(format!(
                "latent has {} channels, model {}",
                state.channels(),
                self.cfg.c
            )));
        }
        Ok(self.decode_cached(params, state)?.0)
    }

    pub fn decode_segment(
        &self,
        params: &ModelParams<T>,
        state: &LatentState<T>,
    ) -> Result<TrajectorySegment<T>> {
        Ok(TrajectorySegment {
            values: self.decode(params, state)?,
            dt: self.cfg.dt,
            end_time_index: self.cfg.window - 1,
        })
    }

    /// Mean over the batch of `Σ_{i=0}^{N} MSE(decode(φ + i·f·dt, θ), s_{t+i})`.
    ///
    /// Each batch element is a `d × (H + N)` context whose columns `i..i+H`
    /// form `s_{t+i}`.
    pub fn loss_and_grad(
        &self,
        params: &ModelParams<T>,
        batch: &[Matrix<T>],
    ) -> Result<(T, ModelParams<T>)> {
        let steps: Vec<_> = (0..=self.cfg.pred_steps)
            .map(|offset| PredictionStep {
                offset,
                weight: T::one(),
            })
            .collect();
        let items: Vec<_> = batch.iter().map(|m| (m, steps.as_slice())).collect();
        self.loss_and_grad_steps(params, &items)
    }

    /// Like [`Pae::loss_and_grad`] with an explicit set of weighted prediction
    /// steps per element. Elements are reduced in order.
    pub fn loss_and_grad_steps(
        &self,
        params: &ModelParams<T>,
        batch: &[(&Matrix<T>, &[PredictionStep<T>])],
    ) -> Result<(T, ModelParams<T>)> {
        self.check_params(params)?;
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let scale = T::one() / T::of_usize(batch.len());
        let mut grads = params.zeros_like();
        let mut total = T::zero();
        for (context, steps) in batch {
            total += self.element(params, context, steps, scale, &mut grads)?;
        }
        Ok((total * scale, grads))
    }

    fn element(
        &self,
        params: &ModelParams<T>,
        context: &Matrix<T>,
        steps: &[PredictionStep<T>],
        scale: T,
        grads: &mut ModelParams<T>,
    ) -> Result<T> {
        let (h, c, d) = (self.cfg.window, self.cfg.c, self.cfg.d);
        let needed = h + steps.iter().map(|s| s.offset).max().unwrap_or(0);
        if context.rows() != d || context.cols() < needed {
            return Err(Error::invalid(format!(
                "context {}x{} cannot supply {} prediction steps for window {h}",
                context.rows(),
                context.cols(),
                needed - h
            )));
        }
        let (state, cache) = self.encode(params, &context.columns(0, h))?;
        let two_pi = T::PI() + T::PI();
        let norm = T::of(2.0) / T::of_usize(d * h);

        let mut d_phi = vec![T::zero(); c];
        let mut d_theta = vec![SpectralParams::<T>::default(); c];
        let mut loss = T::zero();
        for step in steps {
            let shifted = state.advanced(step.offset, self.dt);
            let (out, dc) = self.decode_cached(params, &shifted)?;
            let mut g_out = Matrix::zeros(d, h);
            let mut sq = T::zero();
            for r in 0..d {
                let target = &context.row(r)[step.offset..step.offset + h];
                for (j, (&y, &s)) in out.row(r).iter().zip(target).enumerate() {
                    let e = y - s;
                    sq += e * e;
                    g_out.set(r, j, e * norm * step.weight * scale);
                }
            }
            loss += step.weight * sq / T::of_usize(d * h);

            let g_hidden = conv_backward(
                &params.dec_conv2,
                &dc.hidden,
                &g_out,
                &mut grads.dec_conv2,
                true,
            )
            .unwrap();
            let g_hidden_pre = elu_backward(&dc.hidden_pre, &g_hidden);
            let g_curves = conv_backward(
                &params.dec_conv1,
                &dc.curves,
                &g_hidden_pre,
                &mut grads.dec_conv1,
                true,
            )
            .unwrap();

            let lead = T::of_usize(step.offset) * self.dt;
            for ch in 0..c {
                let a = shifted.theta[ch].a;
                let (mut gf, mut ga, mut gb, mut gp) = (T::zero(), T::zero(), T::zero(), T::zero());
                for j in 0..h {
                    let g = g_curves.get(ch, j);
                    let dphase = g * a * dc.cos_args.get(ch, j) * two_pi;
                    ga += g * dc.sin_args.get(ch, j);
                    gb += g;
                    gp += dphase;
                    // arg = 2π(f·(τ_j + i·dt) + φ) before wrapping
                    gf += dphase * (self.tau[j] + lead);
                }
                d_phi[ch] += gp;
                d_theta[ch].f += gf;
                d_theta[ch].a += ga;
                d_theta[ch].b += gb;
            }
        }

        // phase heads: φ = atan2(sy, sx) / 2π
        let mut g_curves = Matrix::zeros(c, h);
        let heads = &params.phase_heads;
        for ch in 0..c {
            let (sx, sy) = cache.shifts[ch];
            let r2 = sx * sx + sy * sy;
            let curve = cache.curves.row(ch);
            let g = g_curves.row_mut(ch);
            if r2 > T::zero() {
                let gsx = -d_phi[ch] * sy / (two_pi * r2);
                let gsy = d_phi[ch] * sx / (two_pi * r2);
                grads.phase_heads.bias[2 * ch] += gsx;
                grads.phase_heads.bias[2 * ch + 1] += gsy;
                let base = ch * 2 * h;
                for j in 0..h {
                    grads.phase_heads.weight[base + j] += gsx * curve[j];
                    grads.phase_heads.weight[base + h + j] += gsy * curve[j];
                    g[j] += gsx * heads.row(ch, 0)[j] + gsy * heads.row(ch, 1)[j];
                }
            }
            let adj = self
                .extractor
                .adjoint(&cache.spectra[ch], &state.theta[ch], &d_theta[ch]);
            g.iter_mut().zip(adj).for_each(|(a, b)| *a += b);
        }

        let g_hidden = conv_backward(
            &params.enc_conv2,
            &cache.hidden,
            &g_curves,
            &mut grads.enc_conv2,
            true,
        )
        .unwrap();
        let g_hidden_pre = elu_backward(&cache.hidden_pre, &g_hidden);
        conv_backward(
            &params.enc_conv1,
            &cache.input,
            &g_hidden_pre,
            &mut grads.enc_conv1,
            false,
        );
        Ok(loss)
    }
}

/// `atan2(sy, sx) / 2π` wrapped to `[-0.5, 0.5)`; the origin maps to 0.
pub fn phase_of<T: Scalar>(sx: T, sy: T) -> T {
    if sx == T::zero() && sy == T::zero() {
        return T::zero();
    }
    wrap_phase(sy.atan2(sx) / (T::PI() + T::PI()))
}
