//! Mini-batch training of the autoencoder.

mod adam;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::motiondata::{MotionClip, NormStats};
use crate::pae::{Checkpoint, ModelConfig, ModelParams, Pae, PredictionStep};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    /// Segments per mini-batch.
    pub batch: usize,
    pub max_iters: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Write an intermediate checkpoint every this many iterations (0: never).
    pub eval_every: usize,
    /// When set and `N > 0`, each element evaluates step 0 plus this many
    /// future steps drawn uniformly from `1..=N`, weighted `N / K`, instead of
    /// all `N` future steps. The estimate of the loss and its gradient is unbiased.
    pub pred_samples: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 5e-4,
            batch: 50,
            max_iters: 5000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 1,
            eval_every: 1000,
            pred_samples: None,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr, self.beta1, self.beta2, self.eps]
            .iter()
            .all(|v| *v > 0.0);
        if !positive
            || self.weight_decay < 0.0
            || self.batch == 0
            || self.beta1 >= 1.0
            || self.beta2 >= 1.0
        {
            return Err(Error::Config(
                "training hyperparameters out of range".into(),
            ));
        }
        if self.pred_samples == Some(0) {
            return Err(Error::Config("pred_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Where a training context starts: clip index and first column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleIndex {
    pub clip: usize,
    pub start: usize,
}

/// Training state; `Clone` so a run can be forked for inspection.
#[derive(Clone, Debug)]
pub struct Trainer {
    cfg: TrainConfig,
    net: Pae<f64>,
    norm: NormStats,
    data: Vec<Matrix<f64>>,
    index: Vec<SampleIndex>,
    rng: ChaCha8Rng,
    params: ModelParams<f64>,
    adam: AdamState<f64>,
    iter: usize,
    losses: Vec<(usize, f64)>,
}

impl Trainer {
    /// Fits normalization over `clips` and initializes parameters from `cfg.seed`.
    ///
    /// `mcfg.d == 0` is filled in from the data.
    pub fn new(clips: &[MotionClip], cfg: &TrainConfig, mcfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        if clips.is_empty() {
            return Err(Error::invalid("training needs at least one clip"));
        }
        let raw: Vec<Matrix<f64>> = clips
            .iter()
            .map(|c| c.model_states(mcfg.use_velocities))
            .collect::<Result<_>>()?;
        let mut mcfg = mcfg.clone();
        if mcfg.d == 0 {
            mcfg.d = raw[0].rows();
        }
        if raw.iter().any(|m| m.rows() != mcfg.d) {
            return Err(Error::invalid(format!(
                "model expects d={}, data has {}",
                mcfg.d,
                raw[0].rows()
            )));
        }
        if let Some(c) = clips.iter().find(|c| (c.dt - mcfg.dt).abs() > 1e-12) {
            return Err(Error::invalid(format!(
                "clip {} has dt {}, model {}",
                c.name, c.dt, mcfg.dt
            )));
        }
        let net = Pae::new(&mcfg)?;
        let norm = NormStats::fit(&raw)?;
        let data: Vec<Matrix<f64>> = raw.iter().map(|m| norm.apply(m)).collect();

        // a context covers s_t .. s_{t+N}: H + N columns, never crossing a clip end
        let span = mcfg.window + mcfg.pred_steps;
        let mut index = Vec::new();
        for (clip, m) in data.iter().enumerate() {
            if m.cols() >= span {
                index.extend((0..=m.cols() - span).map(|start| SampleIndex { clip, start }));
            }
        }
        if index.is_empty() {
            return Err(Error::invalid(format!(
                "no clip supplies {span} frames for window + prediction horizon"
            )));
        }
        if cfg.batch > index.len() {
            return Err(Error::invalid(format!(
                "batch {} exceeds {} available segments",
                cfg.batch,
                index.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let params = ModelParams::init(&mcfg, cfg.seed);
        let adam = AdamState::new(&params);
        Ok(Self {
            cfg: cfg.clone(),
            net,
            norm,
            data,
            index,
            rng,
            params,
            adam,
            iter: 0,
            losses: Vec::new(),
        })
    }

    pub fn model_config(&self) -> &ModelConfig {
        self.net.config()
    }

    pub fn network(&self) -> &Pae<f64> {
        &self.net
    }

    pub fn params(&self) -> &ModelParams<f64> {
        &self.params
    }

    pub fn norm(&self) -> &NormStats {
        &self.norm
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    pub fn losses(&self) -> &[(usize, f64)] {
        &self.losses
    }

    pub fn sample_index(&self) -> &[SampleIndex] {
        &self.index
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.net.config().clone(),
            norm: self.norm.clone(),
            params: self.params.clone(),
        }
    }

    /// Draws the next batch: contexts and their prediction steps.
    pub fn next_batch(&mut self) -> Vec<(Matrix<f64>, Vec<PredictionStep<f64>>)> {
        let span = self.net.config().window + self.net.config().pred_steps;
        let n = self.net.config().pred_steps;
        (0..self.cfg.batch)
            .map(|_| {
                let s = self.index[self.rng.gen_range(0..self.index.len())];
                let context = self.data[s.clip].columns(s.start, span);
                let steps = match self.cfg.pred_samples {
                    Some(k) if n > 0 => {
                        let w = n as f64 / k as f64;
                        std::iter::once(PredictionStep {
                            offset: 0,
                            weight: 1.0,
                        })
                        .chain((0..k).map(|_| PredictionStep {
                            offset: self.rng.gen_range(1..=n),
                            weight: w,
                        }))
                        .collect()
                    }
                    _ => (0..=n)
                        .map(|offset| PredictionStep {
                            offset,
                            weight: 1.0,
                        })
                        .collect(),
                };
                (context, steps)
            })
            .collect()
    }

    /// One iteration; returns the batch loss before the update.
    pub fn step(&mut self) -> Result<f64> {
        let batch = self.next_batch();
        let items: Vec<_> = batch.iter().map(|(c, s)| (c, s.as_slice())).collect();
        let (loss, grads) = self.net.loss_and_grad_steps(&self.params, &items)?;
        adam_step(&mut self.params, &grads, &mut self.adam, &self.cfg.adam())?;
        self.losses.push((self.iter, loss));
        self.iter += 1;
        Ok(loss)
    }

    /// Runs to `max_iters`, writing `loss.csv`, periodic and final checkpoints
    /// into `out_dir` when given.
    pub fn run(&mut self, out_dir: Option<&Path>) -> Result<Checkpoint> {
        if let Some(dir) = out_dir {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        while self.iter < self.cfg.max_iters {
            let loss = self.step()?;
            if self.iter % 500 == 0 {
                log::info!("iter {} loss {loss:.6}", self.iter);
            }
            if let (Some(dir), true) = (
                out_dir,
                self.cfg.eval_every > 0 && self.iter % self.cfg.eval_every == 0,
            ) {
                self.checkpoint()
                    .save(&dir.join(format!("ckpt_{:05}.ckpt", self.iter)))?;
            }
        }
        let ck = self.checkpoint();
        if let Some(dir) = out_dir {
            write_loss_log(&self.losses, &dir.join("loss.csv"))?;
            ck.save(&dir.join("model.ckpt"))?;
        }
        Ok(ck)
    }
}

/// Trains from scratch; see [`Trainer::run`].
pub fn train(
    clips: &[MotionClip],
    cfg: &TrainConfig,
    mcfg: &ModelConfig,
    out_dir: Option<&Path>,
) -> Result<(Checkpoint, Vec<(usize, f64)>)> {
    let mut t = Trainer::new(clips, cfg, mcfg)?;
    let ck = t.run(out_dir)?;
    Ok((ck, t.losses))
}

/// CSV `iter,loss`; values printed in shortest round-trip form.
pub fn format_loss_log(losses: &[(usize, f64)]) -> String {
    let mut s = String::from("iter,loss\n");
    for (i, l) in losses {
        let _ = writeln!(s, "{i},{l}");
    }
    s
}

pub fn write_loss_log(losses: &[(usize, f64)], path: &Path) -> Result<PathBuf> {
    fs::write(path, format_loss_log(losses)).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}
