//! Policy checkpoints as JSON. Floats are written with round-trip precision.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use super::{NetError, ObsNormalizer, PolicyParams};

pub const POLICY_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub schema: u32,
    pub params: PolicyParams,
    pub normalizer: ObsNormalizer,
}

impl PolicyCheckpoint {
    pub fn new(params: PolicyParams, normalizer: ObsNormalizer) -> Self {
        Self { schema: POLICY_SCHEMA, params, normalizer }
    }

    pub fn to_json(&self) -> Result<String, NetError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let ckpt: PolicyCheckpoint = serde_json::from_str(text)?;
        if ckpt.schema != POLICY_SCHEMA {
            return Err(NetError::Schema { expected: POLICY_SCHEMA, found: ckpt.schema });
        }
        Ok(ckpt)
    }
}

pub fn save_policy(path: &Path, ckpt: &PolicyCheckpoint) -> Result<(), NetError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, ckpt.to_json()?)?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<PolicyCheckpoint, NetError> {
    PolicyCheckpoint::from_json(&fs::read_to_string(path)?)
}
