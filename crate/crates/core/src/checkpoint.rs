//! JSON model checkpoints: layer widths, row-major weights, biases and the
//! configuration that produced them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::NnError;
use crate::nn::{Layer, ModelParams};

pub const FORMAT: &str = "iada-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed checkpoint: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: unsupported checkpoint format {format:?} version {version}")]
    Format {
        path: PathBuf,
        format: String,
        version: u32,
    },
    #[error("{path}: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: NnError,
    },
}

impl CheckpointError {
    /// Whether the file itself is at fault rather than the filesystem.
    pub fn is_validation(&self) -> bool {
        !matches!(self, CheckpointError::Io { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Widths from the input to the class count.
    pub dims: Vec<usize>,
    pub layers: Vec<Layer>,
    /// Whatever configuration produced the model.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, config: serde_json::Value) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            dims: params.dims(),
            layers: params.layers().to_vec(),
            config,
        }
    }

    pub fn params(&self) -> Result<ModelParams, NnError> {
        let p = ModelParams::new(self.layers.clone())?;
        if p.dims() != self.dims {
            return Err(NnError::InvalidShape(format!(
                "declared dims {:?} but layers chain as {:?}",
                self.dims,
                p.dims()
            )));
        }
        Ok(p)
    }
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, config: serde_json::Value) -> Result<(), CheckpointError> {
    let text = serde_json::to_string_pretty(&Checkpoint::new(params, config)).expect("checkpoint serializes");
    fs::write(path, text).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, Checkpoint), CheckpointError> {
    let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|source| CheckpointError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    if ck.format != FORMAT || ck.version != VERSION {
        return Err(CheckpointError::Format {
            path: path.to_path_buf(),
            format: ck.format,
            version: ck.version,
        });
    }
    let params = ck.params().map_err(|source| CheckpointError::Invalid {
        path: path.to_path_buf(),
        source,
    })?;
    Ok((params, ck))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let p = ModelParams::init(&[3, 7, 4], 11).unwrap();
        save_checkpoint(&path, &p, serde_json::json!({"seed": 11})).unwrap();
        let (q, ck) = load_checkpoint(&path).unwrap();
        assert_eq!(p, q);
        assert_eq!(ck.dims, vec![3, 7, 4]);
        assert_eq!(ck.config["seed"], 11);
    }

    #[test]
    fn rejects_inconsistent_dims() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let p = ModelParams::init(&[2, 3, 2], 1).unwrap();
        let mut ck = Checkpoint::new(&p, serde_json::Value::Null);
        ck.dims = vec![2, 4, 2];
        fs::write(&path, serde_json::to_string(&ck).unwrap()).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, CheckpointError::Invalid { .. }), "{err}");
        assert!(err.is_validation());
    }

    #[test]
    fn rejects_ragged_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let p = ModelParams::init(&[2, 3, 2], 1).unwrap();
        let mut ck = Checkpoint::new(&p, serde_json::Value::Null);
        ck.layers[0].weights.pop();
        fs::write(&path, serde_json::to_string(&ck).unwrap()).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::Invalid { .. })));
    }

    #[test]
    fn missing_file_is_io() {
        let err = load_checkpoint(Path::new("/nonexistent/ck.json")).unwrap_err();
        assert!(!err.is_validation());
    }
}
