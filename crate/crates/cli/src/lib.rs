//! Command-line pipeline (corpus generation through evaluation) and the live
//! playback service.

pub mod commands;
pub mod service;

pub use commands::{run, Cli};
