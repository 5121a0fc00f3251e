use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corrector::CalibrationModel;
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    #[serde(flatten)]
    model: CalibrationModel,
}

pub fn model_to_json(model: &CalibrationModel) -> Result<String> {
    model.validate()?;
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

/// Parse and validate a model; a missing or empty fingerprint and
/// non-positive reference variances are rejected.
pub fn model_from_json(text: &str) -> Result<CalibrationModel> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Inconsistency("model has no format_version".into()))?;
    if version != MODEL_FORMAT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: MODEL_FORMAT_VERSION,
        });
    }
    if value.get("montage_fingerprint").is_none() {
        return Err(Error::MissingFingerprint);
    }
    let file: ModelFile = serde_json::from_value(value)?;
    file.model.validate()?;
    Ok(file.model)
}

pub fn save_model(model: &CalibrationModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CalibrationModel> {
    model_from_json(&std::fs::read_to_string(path)?)
}
