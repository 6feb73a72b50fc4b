//! Run configuration: a preset, overlaid by an optional JSON file, overlaid
//! by command-line flags.

use std::path::Path;

use clap::ValueEnum;
use ereact_core::diffusion::{DenoiserConfig, DiffusionTrainConfig, ScheduleConfig};
use ereact_core::metrics::EvalConfig;
use ereact_core::prior::{EncoderConfig, PriorTrainConfig, KMEANS_MAX_ITERS};
use ereact_core::synth::DatasetConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Small models that train on one CPU in minutes.
    #[default]
    Desk,
    /// Full-size models.
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorFitConfig {
    pub kmeans_iters: usize,
}

impl Default for PriorFitConfig {
    fn default() -> Self {
        Self {
            kmeans_iters: KMEANS_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub encoder: EncoderConfig,
    pub prior_train: PriorTrainConfig,
    pub prior_fit: PriorFitConfig,
    pub denoiser: DenoiserConfig,
    pub schedule: ScheduleConfig,
    pub diffusion_train: DiffusionTrainConfig,
    pub metrics: EvalConfig,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Desk => Self::default(),
            Preset::Paper => Self {
                encoder: EncoderConfig::paper(),
                denoiser: DenoiserConfig::paper(),
                dataset: DatasetConfig {
                    length: 120,
                    ..DatasetConfig::default()
                },
                diffusion_train: DiffusionTrainConfig {
                    steps: 20_000,
                    batch: 32,
                    ..DiffusionTrainConfig::default()
                },
                ..Self::default()
            },
        }
    }

    /// Preset values, overlaid by the JSON file at `path` (if any), with
    /// `seed` (if any) replacing every seed. Unknown keys are rejected.
    pub fn resolve(preset: Preset, path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut config = match path {
            None => Self::preset(preset),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
                    path: path.to_path_buf(),
                    msg: e.to_string(),
                })?;
                Self::overlay(preset, &text).map_err(|msg| CliError::Config {
                    path: path.to_path_buf(),
                    msg,
                })?
            }
        };
        if let Some(seed) = seed {
            config.set_seed(seed);
        }
        Ok(config)
    }

    fn overlay(preset: Preset, text: &str) -> std::result::Result<Self, String> {
        let user: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if !user.is_object() {
            return Err("top level must be a JSON object".into());
        }
        let mut base = serde_json::to_value(Self::preset(preset)).map_err(|e| e.to_string())?;
        merge(&mut base, user);
        serde_json::from_value(base).map_err(|e| e.to_string())
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.dataset.seed = seed;
        self.prior_train.seed = seed;
        self.diffusion_train.seed = seed;
        self.metrics.seed = seed;
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        let text = serde_json::to_string_pretty(self).expect("config serialises");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }
}

/// Recursive object merge. Tagged enums (objects with a `kind` key) are
/// replaced whole so a variant switch does not inherit stale fields.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) if !o.contains_key("kind") => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
