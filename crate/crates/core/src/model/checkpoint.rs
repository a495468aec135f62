//! Versioned JSON checkpoints.
//!
//! Floats are written with the shortest representation that parses back
//! to the same bits, and read with a correctly rounded parser, so a
//! save/load cycle is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams};
use crate::data::Standardizer;
use crate::error::{CheckpointError, Error, Result};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u64,
    model_config: ModelConfig,
    standardizer: Standardizer,
    tensors: Vec<TensorRecord>,
}

/// A trained network together with the statistics it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub standardizer: Standardizer,
    pub params: ModelParams,
}

pub fn checkpoint_to_string(ckpt: &Checkpoint) -> Result<String> {
    ckpt.params.audit(&ckpt.config)?;
    let file = CheckpointFile {
        format_version: FORMAT_VERSION,
        model_config: ckpt.config.clone(),
        standardizer: ckpt.standardizer.clone(),
        tensors: ckpt
            .params
            .tensors()
            .into_iter()
            .map(|(name, t)| TensorRecord {
                name,
                shape: [t.rows(), t.cols()],
                data: t.data().to_vec(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Numerical(format!("checkpoint serialization: {e}")))
}

pub fn checkpoint_from_str(text: &str) -> Result<Checkpoint> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| CheckpointError::Malformed("missing integer format_version".into()))?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: FORMAT_VERSION,
        }
        .into());
    }
    let file: CheckpointFile =
        serde_json::from_value(value).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    file.model_config
        .validate()
        .map_err(|e| CheckpointError::Malformed(e.to_string()))?;

    let mut params = ModelParams::zeros(&file.model_config)?;
    let mut slots = params.tensors_mut();
    if slots.len() != file.tensors.len() {
        return Err(CheckpointError::ShapeAudit(format!(
            "config implies {} tensors, file has {}",
            slots.len(),
            file.tensors.len()
        ))
        .into());
    }
    for ((name, slot), rec) in slots.iter_mut().zip(&file.tensors) {
        if *name != rec.name {
            return Err(CheckpointError::ShapeAudit(format!("expected tensor {name}, found {}", rec.name)).into());
        }
        if slot.shape() != (rec.shape[0], rec.shape[1]) || rec.data.len() != slot.len() {
            return Err(CheckpointError::ShapeAudit(format!(
                "{name}: expected {:?}, file declares {:?} with {} values",
                slot.shape(),
                rec.shape,
                rec.data.len()
            ))
            .into());
        }
        slot.data_mut().copy_from_slice(&rec.data);
    }
    drop(slots);
    Ok(Checkpoint {
        config: file.model_config,
        standardizer: file.standardizer,
        params,
    })
}

pub fn checkpoint_save(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = checkpoint_to_string(ckpt)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text)
}
