pub mod audio;
pub mod augment;
pub mod cli;
pub mod converter;
pub mod diagnostics;
pub mod error;
pub mod evalharness;
pub mod manifest;
pub mod metrics;
pub mod predictor;
pub mod speaker;
pub mod synth;
pub mod tensorkit;
pub mod units;

pub use error::{Error, Result};
