//! Training configuration with flag > file > default precedence.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

/// Optional values read from a `--config` TOML file; any CLI flag overrides
/// the corresponding entry here, and anything absent falls back to the
/// built-in defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub epsilon: Option<f64>,
    pub target: Option<String>,
    pub prior: Option<String>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch: Option<usize>,
    pub sigma_max: Option<f64>,
    pub sigma_min: Option<f64>,
    pub prior_epochs: Option<usize>,
    pub prior_lr: Option<f64>,
    pub hide_phase: Option<bool>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }
}

/// Fully resolved training configuration.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epsilon: f64,
    pub target: String,
    pub prior: String,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub prior_epochs: usize,
    pub prior_lr: f64,
    pub hide_phase: bool,
}

impl TrainConfig {
    /// Built-in defaults: ε = 0.5, v-prediction, learned prior, AdamW with
    /// lr = 1e-4, batch 256, 30 epochs on the σ ∈ [0.002, 10] horizon.
    #[allow(clippy::too_many_arguments)]
    pub fn resolve(
        file: &FileConfig,
        epsilon: Option<f64>,
        target: Option<String>,
        prior: Option<String>,
        epochs: Option<usize>,
        lr: Option<f64>,
        batch: Option<usize>,
        sigma_max: Option<f64>,
        sigma_min: Option<f64>,
        prior_epochs: Option<usize>,
        prior_lr: Option<f64>,
        hide_phase: bool,
    ) -> Self {
        Self {
            epsilon: epsilon.or(file.epsilon).unwrap_or(0.5),
            target: target.or_else(|| file.target.clone()).unwrap_or_else(|| "v".into()),
            prior: prior
                .or_else(|| file.prior.clone())
                .unwrap_or_else(|| "learned".into()),
            epochs: epochs.or(file.epochs).unwrap_or(30),
            lr: lr.or(file.lr).unwrap_or(1e-4),
            batch: batch.or(file.batch).unwrap_or(256),
            sigma_max: sigma_max.or(file.sigma_max).unwrap_or(10.0),
            sigma_min: sigma_min.or(file.sigma_min).unwrap_or(0.002),
            prior_epochs: prior_epochs.or(file.prior_epochs).unwrap_or(100),
            prior_lr: prior_lr.or(file.prior_lr).unwrap_or(1e-3),
            hide_phase: hide_phase || file.hide_phase.unwrap_or(false),
        }
    }
}
