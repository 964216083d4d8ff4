//! Whole-pipeline settings, read from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motiondata::{CorpusConfig, DEFAULT_FACTORS};
use crate::pae::ModelConfig;
use crate::runtime::{Feedforward, Mode, TrackerConfig};
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub factors: Vec<f64>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            factors: DEFAULT_FACTORS.to_vec(),
        }
    }
}

/// Settings for the evaluation suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Plant driven by decoded frames when measuring tracking error.
    pub tracker: TrackerConfig,
    /// How the evaluated checkpoint produces targets while tracked.
    pub mode: Mode,
    /// Same for the `--baseline` checkpoint; propagation holds θ for the clip.
    pub baseline_mode: Mode,
    /// Warp factor of the unseen clip and the two trained factors bracketing it.
    pub probe_factor: f64,
    pub bracket: (f64, f64),
    /// Clip whose warps are encoded for the frequency experiment.
    pub probe_clip: String,
    /// Motions switched between in the transition experiment.
    pub transition: (String, String),
    pub transition_s: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tracker: TrackerConfig {
                feedforward: Feedforward::Acceleration,
                tau_limit: 1e4,
                ..Default::default()
            },
            mode: Mode::ReplayEncoded,
            baseline_mode: Mode::PropagateLatent,
            probe_factor: 0.875,
            bracket: (0.75, 1.0),
            probe_clip: "dance00_x1".into(),
            transition: ("dance00_x1".into(), "dance01_x1".into()),
            transition_s: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub augment: AugmentConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub tracker: TrackerConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.tracker.validate()?;
        self.eval.tracker.validate()?;
        if self.augment.factors.is_empty() || self.augment.factors.iter().any(|k| !(*k > 0.0)) {
            return Err(Error::Config(
                "augmentation factors must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Applies one seed to corpus generation and training.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.corpus.seed = seed;
        self.train.seed = seed;
        self
    }
}
