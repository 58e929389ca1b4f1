use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::{MelConfig, DEFAULT_SAMPLE_RATE};
use crate::converter::{ConverterConfig, ConverterTrainConfig, DEFAULT_CONVERT_SCALE, DEFAULT_GL_ITERATIONS};
use crate::error::{Error, Result};
use crate::evalharness::{target_grid, ReportFormat};
use crate::manifest::Split;
use crate::predictor::TrainConfig;
use crate::synth::SynthConfig;
use crate::units::KMeansConfig;

/// Everything a pipeline run can be configured with. Every field has a
/// default, so `{}` is a complete config; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Run seed, recorded with every artifact. Module seeds live in their sections.
    pub seed: u64,
    pub sample_rate: u32,
    pub mel: MelConfig,
    pub synth: SynthConfig,
    pub predictor: TrainConfig,
    pub units: KMeansConfig,
    pub converter: ConverterConfig,
    pub converter_train: ConverterTrainConfig,
    pub eval: EvalConfig,
    pub paths: PathConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Rating gain at conversion time.
    pub scale: f64,
    pub targets: TargetGrid,
    pub split: Split,
    pub format: ReportFormat,
    pub griffin_lim_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    /// Output directory used when a command gets no `--out`.
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sample_rate: DEFAULT_SAMPLE_RATE,
            mel: MelConfig::default(),
            synth: SynthConfig::default(),
            predictor: TrainConfig::default(),
            units: KMeansConfig::default(),
            converter: ConverterConfig::default(),
            converter_train: ConverterTrainConfig::default(),
            eval: EvalConfig::default(),
            paths: PathConfig::default(),
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            scale: DEFAULT_CONVERT_SCALE,
            targets: TargetGrid::default(),
            split: Split::Test,
            format: ReportFormat::Csv,
            griffin_lim_iterations: DEFAULT_GL_ITERATIONS,
        }
    }
}

impl Default for TargetGrid {
    fn default() -> Self {
        Self { lo: -2.0, hi: 2.0, step: 0.5 }
    }
}

impl Default for PathConfig {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("voicelike-out") }
    }
}

impl TargetGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        target_grid(self.lo, self.hi, self.step)
    }
}

impl RunConfig {
    /// Parse and validate a JSON config. Any problem is a configuration error.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate().map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.mel.validate(self.sample_rate)?;
        self.synth.validate()?;
        self.predictor.validate()?;
        self.converter.validate()?;
        self.converter_train.validate()?;
        self.eval.targets.values()?;
        if self.units.k == 0 || self.units.batch_size == 0 || self.units.n_init == 0 {
            return Err(Error::Config("units.k, units.batch_size and units.n_init must be positive".into()));
        }
        if !self.eval.scale.is_finite() {
            return Err(Error::Config("eval.scale must be finite".into()));
        }
        Ok(())
    }

    /// Canonical JSON with every default spelled out.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        hex::encode(&digest[..8])
    }
}
