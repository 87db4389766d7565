//! Experiment configuration, stored as TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleSpec;
use crate::error::{config_err, LsmError, Result};
use crate::neuron::NeuronParams;
use crate::preprocess::{BinOrigin, GaborSpec};
use crate::readout::{ReadoutConfig, StateMode};
use crate::topology::{ConnectionLaw, GridDims};

/// Environment variable naming the root that relative manifest entries and
/// manifest paths resolve against.
pub const DATA_ROOT_ENV: &str = "LSM_DATA_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Manifest listing `split path` lines (see [`crate::harness::Manifest`]).
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    pub preprocess: PreprocessConfig,
    pub neuron: NeuronParams,
    pub reservoir: ReservoirConfig,
    pub input: InputConfig,
    pub ensemble: EnsembleSpec,
    pub readout: ReadoutSection,
    pub seeds: Seeds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    pub time_window_us: u64,
    #[serde(default)]
    pub origin: BinOrigin,
    #[serde(default = "one")]
    pub downscale: usize,
    /// Sum both polarities into one channel before anything else.
    #[serde(default)]
    pub merge_polarities: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gabor: Option<GaborSpec>,
    /// Fixed presentation length; the binned length of each sample otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presentation_steps: Option<usize>,
    #[serde(default = "unit")]
    pub input_scale: f64,
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirConfig {
    /// Grid of every ensemble member; the total budget is this times the member count.
    pub member_dims: GridDims,
    pub law: ConnectionLaw,
}

/// Input weight and density have no canonical values; these are the
/// harness defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub weight: f64,
    pub density: f64,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            weight: 8.0,
            density: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutSection {
    #[serde(default)]
    pub state: StateMode,
    #[serde(flatten)]
    pub train: ReadoutConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub topology: u64,
    pub input: u64,
    pub training: u64,
    /// Independent repeats with derived seeds; accuracy spread is reported.
    #[serde(default = "three")]
    pub repeats: usize,
}

fn three() -> usize {
    3
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| LsmError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LsmError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.manifest.is_relative() && std::env::var_os(DATA_ROOT_ENV).is_none() {
            if let Some(dir) = path.parent() {
                cfg.manifest = dir.join(&cfg.manifest);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.neuron.validate()?;
        self.reservoir.member_dims.validate()?;
        self.reservoir.law.validate()?;
        self.ensemble.validate()?;
        if self.preprocess.time_window_us == 0 {
            return config_err("time_window_us must be positive");
        }
        if self.preprocess.downscale == 0 {
            return config_err("downscale factor must be >= 1");
        }
        if self.preprocess.presentation_steps == Some(0) {
            return config_err("presentation_steps must be positive");
        }
        if !(self.input.density > 0.0 && self.input.density <= 1.0) {
            return config_err(format!("input density {} outside (0, 1]", self.input.density));
        }
        if self.seeds.repeats == 0 {
            return config_err("seeds.repeats must be >= 1");
        }
        if !(self.readout.train.l2 >= 0.0) || self.readout.train.max_epochs == 0 {
            return config_err("readout needs l2 >= 0 and at least one epoch");
        }
        if self.readout.state == StateMode::PerSlab && !matches!(self.ensemble, EnsembleSpec::Tepre { .. }) {
            return config_err("per-slab state extraction requires a TEPRE ensemble");
        }
        Ok(())
    }

    pub fn total_neurons(&self) -> usize {
        self.reservoir.member_dims.size() * self.ensemble.members()
    }
}
