//! Self-describing JSON checkpoints.
//!
//! Floats are written in shortest round-trip form and parsed with exact
//! float parsing, so a loaded model predicts bit-identically.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::Interner;
use crate::models::{Model, ModelKind};
use crate::training::TrainConfig;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub kind: ModelKind,
    pub config: TrainConfig,
    pub config_hash: String,
    pub students: Interner,
    pub courses: Interner,
    pub model: Model,
}

impl Checkpoint {
    pub fn new(config: TrainConfig, students: Interner, courses: Interner, model: Model) -> Self {
        Checkpoint {
            format: FORMAT_VERSION,
            kind: model.kind(),
            config_hash: config.hash(),
            config,
            students,
            courses,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint values are finite")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.format != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                ckpt.format
            )));
        }
        if ckpt.kind != ckpt.model.kind() {
            return Err(Error::Checkpoint(format!(
                "header says {} but parameters are {}",
                ckpt.kind,
                ckpt.model.kind()
            )));
        }
        if ckpt.config_hash != ckpt.config.hash() {
            return Err(Error::Checkpoint("config hash mismatch".into()));
        }
        if ckpt.courses.len() != ckpt.model.n_courses() {
            return Err(Error::Checkpoint(format!(
                "{} course names for {} parameter rows",
                ckpt.courses.len(),
                ckpt.model.n_courses()
            )));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }
}
