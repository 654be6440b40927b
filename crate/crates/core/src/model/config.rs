use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::domain::{BOX_CUE, BOX_CUE_WIDTH};

/// A cue the model consumes, with its fixed input width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueSpec {
    pub id: usize,
    pub width: usize,
}

/// Network dimensions. Defaults are desk scale; [`ModelConfig::full_scale`] switches
/// to 4 layers and 8 heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub cues: Vec<CueSpec>,
    pub d_model: usize,
    pub d_fuse: usize,
    pub d_emb: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub gaffe_d_ff: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            cues: vec![
                CueSpec {
                    id: BOX_CUE,
                    width: BOX_CUE_WIDTH,
                },
                CueSpec { id: 1, width: 64 },
                CueSpec { id: 2, width: 51 },
            ],
            d_model: 64,
            d_fuse: 128,
            d_emb: 128,
            layers: 2,
            heads: 4,
            d_ff: 256,
            gaffe_d_ff: 256,
        }
    }
}

impl ModelConfig {
    pub fn full_scale() -> Self {
        Self {
            layers: 4,
            heads: 8,
            ..Self::default()
        }
    }

    pub fn cue_width(&self, cue_id: usize) -> Option<usize> {
        self.cues.iter().find(|c| c.id == cue_id).map(|c| c.width)
    }

    pub fn cue_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.cues.iter().map(|c| c.id)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: &'static str| Err(ModelError::InvalidConfig { reason });
        if self.cue_width(BOX_CUE).is_none() {
            return bad("cue 0 must be configured");
        }
        let mut ids: Vec<usize> = self.cue_ids().collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate cue id");
        }
        if self.cues.iter().any(|c| c.width == 0) {
            return bad("cue width must be positive");
        }
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) || !self.d_fuse.is_multiple_of(self.heads) {
            return bad("heads must divide d_model and d_fuse");
        }
        if self.d_model == 0 || self.d_emb == 0 || self.d_ff == 0 || self.gaffe_d_ff == 0 {
            return bad("dimensions must be positive");
        }
        Ok(())
    }
}
