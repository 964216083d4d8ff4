use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network and window hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Input channels (state dimension).
    pub d: usize,
    /// Latent channels.
    pub c: usize,
    /// Window length `H` in frames.
    pub window: usize,
    /// Seconds per frame.
    pub dt: f64,
    /// Channels between the two convolutions on each side.
    pub hidden: usize,
    /// Convolution width, odd.
    pub kernel: usize,
    /// Forward-prediction steps `N` in the training loss.
    pub pred_steps: usize,
    /// Feed joint velocities to the model alongside positions.
    pub use_velocities: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 14,
            c: 8,
            window: 100,
            dt: 0.01,
            hidden: 64,
            kernel: 51,
            pred_steps: 0,
            use_velocities: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.d == 0 || self.c == 0 || self.hidden == 0 {
            return bad("d, c and hidden must be positive");
        }
        if self.kernel % 2 == 0 {
            return bad("kernel must be odd");
        }
        if self.window < 4 || self.window % 2 != 0 {
            return bad("window must be even and at least 4");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        Ok(())
    }

    /// Half-width of the convolution kernel.
    pub fn radius(&self) -> usize {
        self.kernel / 2
    }

    /// Centered window time axis, `τ_j = (j − H/2)·dt`.
    pub fn tau(&self) -> Vec<f64> {
        (0..self.window)
            .map(|j| (j as f64 - (self.window / 2) as f64) * self.dt)
            .collect()
    }
}
