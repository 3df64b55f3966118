//! JSON checkpoint container with a SHA-256 integrity checksum.
//!
//! Layout:
//!
//! ```json
//! {
//!   "format": "jnf-checkpoint",
//!   "version": 1,
//!   "config": { "variant": "ft-jnf", "hidden": [256, 128], ... },
//!   "params": [ { "name": "lstm1.fwd.w", "shape": [512, 6], "data": [...] }, ... ],
//!   "checksum": "<hex sha256 of the JSON body without the checksum field>"
//! }
//! ```
//!
//! Values are stored as 64-bit floats in row-major order; the JSON number
//! formatting round-trips them exactly.

use std::fs;
use std::path::Path;

use ndarray::IxDyn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::neural::model::{Model, ModelConfig, Param};
use crate::neural::tape::Tensor;

pub const CHECKPOINT_FORMAT: &str = "jnf-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StoredParam {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Body {
    format: String,
    version: u32,
    config: ModelConfig,
    params: Vec<StoredParam>,
}

#[derive(Serialize, Deserialize)]
struct File {
    #[serde(flatten)]
    body: Body,
    checksum: String,
}

fn checksum(body: &Body) -> Result<String> {
    let bytes = serde_json::to_vec(body)?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    model.validate()?;
    let body = Body {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        params: model
            .params
            .iter()
            .map(|p| StoredParam {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                data: p.value.iter().copied().collect(),
            })
            .collect(),
    };
    let checksum = checksum(&body)?;
    let text = serde_json::to_string(&File { body, checksum })?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: File =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if file.body.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("unknown format `{}`", file.body.format)));
    }
    if file.body.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", file.body.version)));
    }
    if checksum(&file.body)? != file.checksum {
        return Err(Error::Checkpoint(format!("checksum mismatch in {}", path.display())));
    }
    let params = file
        .body
        .params
        .into_iter()
        .map(|p| {
            let value = Tensor::from_shape_vec(IxDyn(&p.shape), p.data)
                .map_err(|e| Error::Checkpoint(format!("parameter {}: {e}", p.name)))?;
            Ok(Param { name: p.name, value })
        })
        .collect::<Result<Vec<_>>>()?;
    let model = Model {
        config: file.body.config,
        params,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::model::{build_model, Variant};

    #[test]
    fn round_trip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = build_model(&ModelConfig::new(Variant::FtNsf).with_hidden((4, 3)).with_bins(9).with_seed(5)).unwrap();
        save_checkpoint(&model, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), model);

        let text = fs::read_to_string(&path).unwrap();
        let first = model.params[0].value.iter().next().unwrap().to_string();
        let tampered = text.replacen(&first, "0.123", 1);
        assert_ne!(tampered, text);
        fs::write(&path, tampered).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}
