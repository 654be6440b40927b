//! Association-centric training: labelled stores, cross-video scenario sampling,
//! augmentations, the contrastive objective and the two-phase schedule.

mod augment;
mod loss;
mod scenario;
mod store;

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use augment::{
    augment, augment_cue_dropout, augment_detection_dropout, augment_identity_swap, augment_perturb, drop_probability,
    swap_detections, AugmentConfig,
};
pub use loss::{info_nce, single_cue_loss};
pub use scenario::{sample_scenario, InputMode, Scenario, ScenarioDetection, ScenarioTracklet, SummaryInputs};
pub use store::{preprocess, LabeledFrame, TrainingStore, Video};

use crate::diffcore::{Adam, DiffError, Tape, Tensor};
use crate::model::{Camel, ModelError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("ground truth and detections share no frame")]
    FrameMismatch,
    #[error("store has no frame with a tracklet-detection pair")]
    InsufficientData,
    #[error("scenario has no positive pair")]
    NoPositives,
    #[error("invalid training config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub pairs_per_scenario: usize,
    pub bank_capacity: usize,
    /// Identities unseen for longer than this are not offered as tracklets.
    pub max_age: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub pretrain_epochs: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            pairs_per_scenario: 32,
            bank_capacity: 50,
            max_age: 60,
            batch_size: 16,
            learning_rate: 1e-4,
            temperature: 0.1,
            pretrain_epochs: 2,
            epochs: 10,
            steps_per_epoch: 50,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.pairs_per_scenario == 0 || self.bank_capacity == 0 || self.batch_size == 0 || self.steps_per_epoch == 0
        {
            return Err(TrainError::InvalidConfig("sizes must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.temperature > 0.0) {
            return Err(TrainError::InvalidConfig(
                "learning rate and temperature must be positive",
            ));
        }
        self.augment.validate()
    }
}

/// Epoch-averaged losses of both phases.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainReport {
    pub pretrain_losses: Vec<f64>,
    pub losses: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    Pretrain,
    Joint,
}

fn run_phase(
    model: &mut Camel,
    store: &TrainingStore,
    cfg: &TrainConfig,
    mode: &InputMode,
    phase: Phase,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, TrainError> {
    let epochs = match phase {
        Phase::Pretrain => cfg.pretrain_epochs,
        Phase::Joint => cfg.epochs,
    };
    let mut adam = Adam::new(cfg.learning_rate);
    let mut curve = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut epoch_loss = 0.0;
        let mut counted = 0usize;
        for _ in 0..cfg.steps_per_epoch {
            let mut grads: Vec<Tensor> = model
                .params()
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect();
            let mut used = 0usize;
            for _ in 0..cfg.batch_size {
                let mut s = sample_scenario(store, cfg.pairs_per_scenario, cfg.bank_capacity, cfg.max_age, rng)?;
                augment(&mut s, &cfg.augment, rng);
                let mut tape = Tape::new();
                let bound = model.bind(&mut tape, true);
                let loss = match phase {
                    Phase::Pretrain => single_cue_loss(model, &mut tape, &bound, &s, cfg.temperature)?,
                    Phase::Joint => {
                        let summaries = mode.summaries(&s);
                        let objects = s.objects(mode, &summaries);
                        let z = model.forward(&mut tape, &bound, &objects)?;
                        Some(info_nce(
                            &mut tape,
                            z,
                            s.tracklets.len(),
                            &s.targets(),
                            cfg.temperature,
                        )?)
                    }
                };
                let Some(loss) = loss else { continue };
                epoch_loss += tape.value(loss).item();
                counted += 1;
                used += 1;
                tape.backward(loss)?;
                for (g, &v) in grads.iter_mut().zip(bound.vars()) {
                    let gv = tape.grad(v);
                    for (a, b) in g.data_mut().iter_mut().zip(gv.data()) {
                        *a += b;
                    }
                }
            }
            if used == 0 {
                continue;
            }
            let inv = 1.0 / used as f64;
            for g in &mut grads {
                for v in g.data_mut() {
                    *v *= inv;
                }
            }
            adam.step(model.params_mut().tensors_mut(), &grads)?;
        }
        curve.push(if counted == 0 { 0.0 } else { epoch_loss / counted as f64 });
    }
    Ok(curve)
}

/// Phase one: every temporal encoder alone on its own cue.
pub fn pretrain(
    model: &mut Camel,
    store: &TrainingStore,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, TrainError> {
    run_phase(model, store, cfg, &InputMode::Full, Phase::Pretrain, rng)
}

/// Phase two: encoders and fusion jointly.
pub fn train_joint(
    model: &mut Camel,
    store: &TrainingStore,
    cfg: &TrainConfig,
    mode: &InputMode,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, TrainError> {
    run_phase(model, store, cfg, mode, Phase::Joint, rng)
}

/// Both phases from `cfg.seed`. Summary-input models skip the temporal pretraining.
pub fn train(
    model: &mut Camel,
    store: &TrainingStore,
    cfg: &TrainConfig,
    mode: &InputMode,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pretrain_losses = match mode {
        InputMode::Full => pretrain(model, store, cfg, &mut rng)?,
        InputMode::Summary(_) => Vec::new(),
    };
    // separate stream so phase two does not depend on how much phase one consumed
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let losses = train_joint(model, store, cfg, mode, &mut rng)?;
    Ok(TrainReport {
        pretrain_losses,
        losses,
    })
}
