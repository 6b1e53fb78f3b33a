//! Versioned checkpoint container.
//!
//! A checkpoint file starts with the magic header line `RSBM1` followed by a
//! JSON document. Velocity checkpoints embed the full bridge configuration
//! and prediction target, so a sampler can never be driven with a mismatched
//! `ε` or target kind; prior checkpoints embed the bridge configuration they
//! were trained against for the same cross-check.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bridge::BridgeConfig;
use crate::error::{Error, Result};
use crate::model::VelocityModel;
use crate::prior::PriorKind;

/// Magic header line; bump when the container layout changes.
pub const MAGIC: &str = "RSBM1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Checkpoint {
    Velocity { model: VelocityModel },
    Prior {
        bridge: BridgeConfig,
        prior: PriorKind,
    },
}

pub fn save(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let body = serde_json::to_string_pretty(checkpoint)
        .map_err(|e| Error::Checkpoint(format!("serialize: {e}")))?;
    fs::write(path, format!("{MAGIC}\n{body}\n"))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    let Some((header, body)) = text.split_once('\n') else {
        return Err(Error::Checkpoint(format!(
            "{}: missing magic header",
            path.display()
        )));
    };
    if header.trim_end() != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: bad magic '{}' (expected {MAGIC})",
            path.display(),
            header.trim_end()
        )));
    }
    serde_json::from_str(body).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn save_velocity(path: &Path, model: &VelocityModel) -> Result<()> {
    save(
        path,
        &Checkpoint::Velocity {
            model: model.clone(),
        },
    )
}

pub fn load_velocity(path: &Path) -> Result<VelocityModel> {
    match load(path)? {
        Checkpoint::Velocity { model } => Ok(model),
        Checkpoint::Prior { .. } => Err(Error::Checkpoint(format!(
            "{}: expected a velocity checkpoint, found a prior",
            path.display()
        ))),
    }
}

pub fn save_prior(path: &Path, bridge: &BridgeConfig, prior: &PriorKind) -> Result<()> {
    save(
        path,
        &Checkpoint::Prior {
            bridge: *bridge,
            prior: prior.clone(),
        },
    )
}

pub fn load_prior(path: &Path) -> Result<(BridgeConfig, PriorKind)> {
    match load(path)? {
        Checkpoint::Prior { bridge, prior } => Ok((bridge, prior)),
        Checkpoint::Velocity { .. } => Err(Error::Checkpoint(format!(
            "{}: expected a prior checkpoint, found a velocity model",
            path.display()
        ))),
    }
}
