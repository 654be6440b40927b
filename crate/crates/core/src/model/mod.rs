//! The association network: one temporal encoder per cue, then group-aware fusion
//! across every tracklet and detection of a frame.

mod config;
mod encoder;
mod gaffe;
mod params;
mod temporal;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{CueSpec, ModelConfig};
pub use params::{Bound, ParamId, ParamStore};
pub use temporal::temporal_positional_encoding;

use crate::diffcore::{DiffError, Tape, Var};
use crate::domain::{CueTensor, Detection};
use gaffe::Gaffe;
use temporal::TemporalEncoder;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("negative age {age}")]
    NegativeAge { age: i64 },
    #[error("no step carries cue {cue}")]
    EmptySequence { cue: usize },
    #[error("cue {cue}: expected width {expected}, got {actual}")]
    WidthMismatch { cue: usize, expected: usize, actual: usize },
    #[error("object {object} has no box cue")]
    MissingMandatoryCue { object: usize },
    #[error("cue {cue} is not part of the model")]
    UnknownCue { cue: usize },
    #[error("no objects to encode")]
    NoObjects,
    #[error("invalid model config: {reason}")]
    InvalidConfig { reason: &'static str },
    #[error("unknown parameter {name}")]
    UnknownParameter { name: String },
    #[error("parameter {name} appears twice")]
    DuplicateParameter { name: String },
    #[error("parameter {name} missing")]
    MissingParameter { name: String },
    #[error("parameter {name}: expected shape {expected:?}, got {actual:?}")]
    ParameterShape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Set of cue ids hidden from the model for one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CueMask(u64);

impl CueMask {
    pub const NONE: CueMask = CueMask(0);

    pub fn contains(self, cue: usize) -> bool {
        cue < 64 && self.0 & (1 << cue) != 0
    }

    pub fn insert(&mut self, cue: usize) {
        assert!(cue < 64, "cue ids above 63 cannot be masked");
        self.0 |= 1 << cue;
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

/// One observation inside an object's history.
#[derive(Debug, Clone, Copy)]
pub struct Step<'a> {
    pub frame: i64,
    pub cues: &'a BTreeMap<usize, CueTensor>,
    pub mask: CueMask,
}

/// Cue history of one active object relative to the current frame `t_cur`.
/// A detection is a history of length one.
#[derive(Debug, Clone)]
pub struct ObjectSequence<'a> {
    pub t_cur: i64,
    pub steps: Vec<Step<'a>>,
}

impl<'a> ObjectSequence<'a> {
    pub fn from_detections<I>(t_cur: i64, dets: I) -> Self
    where
        I: IntoIterator<Item = &'a Detection>,
    {
        Self {
            t_cur,
            steps: dets
                .into_iter()
                .map(|d| Step {
                    frame: d.frame as i64,
                    cues: &d.cues,
                    mask: CueMask::NONE,
                })
                .collect(),
        }
    }

    pub fn has_cue(&self, cue: usize) -> bool {
        self.steps
            .iter()
            .any(|s| !s.mask.contains(cue) && s.cues.contains_key(&cue))
    }
}

/// Network structure plus its parameters.
#[derive(Debug, Clone)]
pub struct Camel {
    config: ModelConfig,
    params: ParamStore,
    temporal: Vec<TemporalEncoder>,
    gaffe: Gaffe,
}

impl Camel {
    /// Freshly initialised network; parameters are a pure function of `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let temporal = config
            .cues
            .iter()
            .map(|c| TemporalEncoder::new(&mut params, &mut rng, &config, c.id, c.width))
            .collect();
        let gaffe = Gaffe::new(&mut params, &mut rng, &config);
        Ok(Self {
            config,
            params,
            temporal,
            gaffe,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// True for parameters owned by one of the temporal encoders.
    pub fn is_temporal_param(name: &str) -> bool {
        name.starts_with("te.")
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        self.params.bind(tape, trainable)
    }

    /// `[1, d_model]` CLS output of the temporal encoder for `cue`.
    pub fn encode_cue_sequence(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        cue: usize,
        seq: &ObjectSequence<'_>,
    ) -> Result<Var, ModelError> {
        let te = self
            .temporal
            .iter()
            .find(|t| t.cue_id == cue)
            .ok_or(ModelError::UnknownCue { cue })?;
        te.forward(tape, bound, seq)
    }

    /// Temporal encodings of every present cue of every object.
    pub fn temporal_tokens(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        objects: &[ObjectSequence<'_>],
    ) -> Result<Vec<BTreeMap<usize, Var>>, ModelError> {
        objects
            .iter()
            .map(|obj| {
                let mut cues = BTreeMap::new();
                for te in &self.temporal {
                    if obj.has_cue(te.cue_id) {
                        cues.insert(te.cue_id, te.forward(tape, bound, obj)?);
                    }
                }
                Ok(cues)
            })
            .collect()
    }

    pub fn gaffe_fuse_and_encode(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        tokens: &[BTreeMap<usize, Var>],
    ) -> Result<Var, ModelError> {
        self.gaffe.forward(tape, bound, tokens)
    }

    /// `[objects, d_emb]` unit-norm embeddings, rows in input order.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, objects: &[ObjectSequence<'_>]) -> Result<Var, ModelError> {
        let tokens = self.temporal_tokens(tape, bound, objects)?;
        self.gaffe_fuse_and_encode(tape, bound, &tokens)
    }

    /// Inference-only forward pass returning plain vectors.
    pub fn embed(&self, objects: &[ObjectSequence<'_>]) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let out = self.forward(&mut tape, &bound, objects)?;
        let t = tape.value(out);
        Ok((0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect())
    }
}
