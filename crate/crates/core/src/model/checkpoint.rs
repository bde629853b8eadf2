//! Self-describing JSON model checkpoints.
//!
//! The container holds the field schema, the architecture descriptor, every
//! parameter block, and optionally the projection plan that produced the
//! embedding table. JSON floats are written in shortest round-trip form, so
//! save followed by load is bit-exact for parameters.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PredictionModel;
use crate::projection::ProjectionPlan;

pub const CKPT_VERSION: &str = "crossadapt-ckpt-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub model: PredictionModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<ProjectionPlan>,
}

pub fn save_checkpoint(
    path: &Path,
    model: &PredictionModel,
    plan: Option<&ProjectionPlan>,
) -> Result<()> {
    let ckpt = Checkpoint {
        version: CKPT_VERSION.to_string(),
        model: model.clone(),
        plan: plan.cloned(),
    };
    let json = serde_json::to_string(&ckpt)
        .map_err(|e| Error::Parse(format!("checkpoint serialization failed: {e}")))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if ckpt.version != CKPT_VERSION {
        return Err(Error::Parse(format!(
            "{}: unsupported checkpoint version '{}', expected '{CKPT_VERSION}'",
            path.display(),
            ckpt.version
        )));
    }
    if !ckpt.model.embedding.weights.is_finite() || !ckpt.model.net.is_finite() {
        return Err(Error::Numeric("checkpoint contains non-finite parameters".into()));
    }
    Ok(ckpt)
}
