//! Periodic-autoencoder motion representation.
//!
//! Multichannel joint trajectories are encoded window by window into
//! per-channel sinusoid parameters (phase, frequency, amplitude, offset)
//! through a 1-D convolutional encoder and a differentiable real FFT, and
//! decoded back from those parameters. Training uses the N-step forward
//! prediction loss; at runtime the latent state is either propagated with its
//! own frequency or re-encoded fresh from the most recent window, and motions
//! are switched by interpolating latents.

pub mod config;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod motiondata;
pub mod pae;
pub mod runtime;
pub mod scalar;
pub mod spectral;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::{wrap_phase, Scalar};

pub use config::RunConfig;
pub use motiondata::MotionClip;
pub use pae::{Checkpoint, ModelConfig};
pub use runtime::{Model, Player};

/// Double-precision network, the precision used for training and inference.
pub type Network = pae::Pae<f64>;
pub type Params = pae::ModelParams<f64>;
pub type Latent = pae::LatentState<f64>;
pub type Segment = motiondata::TrajectorySegment<f64>;
pub type Theta = spectral::SpectralParams<f64>;
