//! Versioned JSON checkpoints of trained policies.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::PolicyParams;
use super::PpoConfig;
use crate::error::{Error, Result};

pub const FORMAT: &str = "thzuav-policy";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub ppo_config_hash: String,
    pub params: PolicyParams,
}

impl Checkpoint {
    pub fn new(params: PolicyParams, cfg: &PpoConfig) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            ppo_config_hash: cfg.content_hash(),
            params,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        if ck.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", ck.format)));
        }
        if ck.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        Ok(Self {
            params: ck.params.validated()?,
            ..ck
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingCheckpoint(path.display().to_string()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
