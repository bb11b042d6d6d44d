use std::path::Path;

use egomem_core::io::read_json;
use egomem_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub d_dit: usize,
    /// Learned global summary tokens appended after the frame tokens.
    pub k: usize,
    pub n_spatial: usize,
    pub n_temporal: usize,
    pub heads: usize,
    pub dropout: f64,
    pub joints: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_model: 512,
            d_dit: 1536,
            k: 4,
            n_spatial: 2,
            n_temporal: 2,
            heads: 8,
            dropout: 0.1,
            joints: 23,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    /// Small configuration used for gradient checks.
    pub fn tiny() -> Self {
        Self {
            d_model: 32,
            d_dit: 48,
            k: 2,
            heads: 2,
            joints: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.d_model == 0 || self.d_dit == 0 {
            return bad("model widths must be positive".into());
        }
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return bad(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            ));
        }
        if self.k == 0 {
            return bad("need at least one global token".into());
        }
        if self.joints == 0 {
            return bad("need at least one joint".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0,1)", self.dropout));
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate()
            .map_err(|e| Error::format(path, "encoder config", e.to_string()))?;
        Ok(cfg)
    }
}
