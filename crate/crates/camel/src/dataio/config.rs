//! Run configuration: one TOML file with a section per stage.

use camel_core::heuristics::KalmanConfig;
use camel_core::model::ModelConfig;
use camel_core::synth::SynthConfig;
use camel_core::tracker::{EmaScorer, FusedScorer, KfScorer, LifecycleConfig};
use camel_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicsConfig {
    /// EMA weight of the running appearance.
    pub alpha: f64,
    /// Motion weight of the fixed blend.
    pub lambda: f64,
    pub max_cost: f64,
    pub std_position: f64,
    pub std_velocity: f64,
}

impl Default for HeuristicsConfig {
    fn default() -> Self {
        let k = KalmanConfig::default();
        Self {
            alpha: 0.9,
            lambda: 0.5,
            max_cost: 0.9,
            std_position: k.std_position,
            std_velocity: k.std_velocity,
        }
    }
}

impl HeuristicsConfig {
    pub fn kalman(&self) -> KalmanConfig {
        KalmanConfig {
            std_position: self.std_position,
            std_velocity: self.std_velocity,
        }
    }

    pub fn ema(&self) -> EmaScorer {
        EmaScorer {
            alpha: self.alpha,
            max_cost: self.max_cost,
        }
    }

    pub fn kf(&self) -> KfScorer {
        KfScorer {
            kalman: self.kalman(),
            max_cost: self.max_cost,
        }
    }

    pub fn fused(&self) -> FusedScorer {
        FusedScorer {
            lambda: self.lambda,
            alpha: self.alpha,
            kalman: self.kalman(),
            max_cost: self.max_cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Held-out sequences generated after the `synth.n_sequences` training ones.
    pub test_sequences: usize,
    pub iou_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            test_sequences: 2,
            iou_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds data generation, initialisation and training unless overridden.
    pub seed: u64,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub tracker: LifecycleConfig,
    pub heuristics: HeuristicsConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Pins every stage to `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.synth.seed = seed;
        self.train.seed = seed;
        self
    }

    /// SHA-256 over the canonical JSON form of the whole configuration.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(serde_json::to_vec(self).expect("config serialises")).into()
    }
}

/// SHA-256 over the canonical JSON form of the model section; stored in weight files.
pub fn config_hash(model: &ModelConfig) -> [u8; 32] {
    Sha256::digest(serde_json::to_vec(model).expect("config serialises")).into()
}
