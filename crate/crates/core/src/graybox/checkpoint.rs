//! Versioned model checkpoints. Floats are written with 17 significant
//! digits, so save → load reproduces the model bit for bit.

use super::GrayboxParams;
use crate::error::{Error, Result};
use crate::jsonfmt;
use std::io::Write;
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(serde::Serialize, serde::Deserialize)]
struct CheckpointFile {
    format_version: u32,
    model: GrayboxParams,
}

pub fn save_checkpoint(gb: &GrayboxParams, path: &Path) -> Result<()> {
    gb.validate()?;
    let file = CheckpointFile {
        format_version: CHECKPOINT_VERSION,
        model: gb.clone(),
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    jsonfmt::to_writer_full(&mut out, &file).map_err(|e| Error::CorruptFile {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<GrayboxParams> {
    let corrupt = |message: String| Error::CorruptFile {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| corrupt("missing format_version".into()))?;
    if version != u64::from(CHECKPOINT_VERSION) {
        return Err(Error::VersionMismatch {
            found: version.try_into().unwrap_or(u32::MAX),
            expected: CHECKPOINT_VERSION,
        });
    }
    let file: CheckpointFile =
        serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
    // A structurally broken model is file corruption; a wrong feature table
    // keeps its own error class so callers can tell the two apart.
    file.model.validate().map_err(|e| match e {
        Error::LayoutMismatch(m) => Error::LayoutMismatch(m),
        other => corrupt(other.to_string()),
    })?;
    Ok(file.model)
}
