//! Periodic autoencoder: convolutional encoder, FFT parameter extraction and
//! atan2 phase heads, sinusoidal reparameterization, convolutional decoder.

mod checkpoint;
mod config;
mod conv;
mod network;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use conv::{conv_backward, conv_forward, elu};
pub use network::{phase_of, ForwardCache, LatentState, Pae, PredictionStep};
pub use params::{Conv1d, ModelParams, PhaseHeads, TENSOR_NAMES};
