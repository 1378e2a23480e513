use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Optimizer settings for every latent-space search in the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PieceConfig {
    pub alpha: f64,
    pub restarts: usize,
    pub invert_steps: usize,
    pub invert_lr: f64,
    pub ascent_lr: f64,
    pub ascent_max_steps: usize,
    pub visual_steps: usize,
    pub visual_lr: f64,
}

impl Default for PieceConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            restarts: 8,
            invert_steps: 800,
            invert_lr: 0.05,
            ascent_lr: 0.02,
            ascent_max_steps: 2000,
            visual_steps: 400,
            visual_lr: 0.02,
        }
    }
}

impl PieceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 0.5), got {}", self.alpha)));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("at least one inversion restart is needed".into()));
        }
        for (name, lr) in [("invert_lr", self.invert_lr), ("ascent_lr", self.ascent_lr), ("visual_lr", self.visual_lr)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be a finite non-negative number")));
            }
        }
        Ok(())
    }
}
