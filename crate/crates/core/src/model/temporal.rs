use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::encoder::{init_token, Encoder, LinearParams};
use super::params::{Bound, ParamId, ParamStore};
use super::{ModelConfig, ModelError, ObjectSequence};
use crate::diffcore::{Tape, Tensor, Var};

/// Sinusoidal encoding of a non-negative frame age:
/// `pe[2i] = sin(age / 10000^(2i/d))`, `pe[2i+1] = cos(age / 10000^(2i/d))`.
pub fn temporal_positional_encoding(age: i64, d_model: usize) -> Result<Vec<f64>, ModelError> {
    if age < 0 {
        return Err(ModelError::NegativeAge { age });
    }
    let pos = age as f64;
    let d = d_model as f64;
    let mut pe = Vec::with_capacity(d_model);
    for j in 0..d_model {
        let i2 = (j - j % 2) as f64;
        let angle = pos / libm::pow(10000.0, i2 / d);
        pe.push(if j % 2 == 0 { libm::sin(angle) } else { libm::cos(angle) });
    }
    Ok(pe)
}

/// Per-cue transformer over one object's cue history; the CLS slot is the output.
#[derive(Debug, Clone)]
pub(crate) struct TemporalEncoder {
    pub cue_id: usize,
    pub width: usize,
    d_model: usize,
    input: LinearParams,
    cls: ParamId,
    encoder: Encoder,
}

impl TemporalEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        cfg: &ModelConfig,
        cue_id: usize,
        width: usize,
    ) -> Self {
        let prefix = format!("te.{cue_id}");
        Self {
            cue_id,
            width,
            d_model: cfg.d_model,
            input: LinearParams::new(store, rng, &format!("{prefix}.input"), width, cfg.d_model),
            cls: init_token(store, rng, format!("{prefix}.cls"), cfg.d_model),
            encoder: Encoder::new(store, rng, &prefix, cfg.d_model, cfg.layers, cfg.heads, cfg.d_ff),
        }
    }

    /// Rows of `[values | age]` for every step that carries this cue.
    pub fn tokens(&self, seq: &ObjectSequence<'_>) -> Result<(Vec<f64>, Vec<i64>), ModelError> {
        let mut values = Vec::new();
        let mut ages = Vec::new();
        for step in &seq.steps {
            if step.mask.contains(self.cue_id) {
                continue;
            }
            let Some(cue) = step.cues.get(&self.cue_id) else {
                continue;
            };
            if cue.width() != self.width {
                return Err(ModelError::WidthMismatch {
                    cue: self.cue_id,
                    expected: self.width,
                    actual: cue.width(),
                });
            }
            values.extend_from_slice(&cue.values);
            ages.push(seq.t_cur - step.frame);
        }
        Ok((values, ages))
    }

    /// `[1, d_model]` CLS output, or `EmptySequence` when no step carries the cue.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, seq: &ObjectSequence<'_>) -> Result<Var, ModelError> {
        let (values, ages) = self.tokens(seq)?;
        if ages.is_empty() {
            return Err(ModelError::EmptySequence { cue: self.cue_id });
        }
        let n = ages.len();
        let mut pe = Vec::with_capacity(n * self.d_model);
        for &age in &ages {
            pe.extend(temporal_positional_encoding(age, self.d_model)?);
        }
        let x = tape.constant(Tensor::new(alloc::vec![n, self.width], values)?);
        let pe = tape.constant(Tensor::new(alloc::vec![n, self.d_model], pe)?);
        let tokens = self.input.apply(tape, bound, x)?;
        let tokens = tape.add(tokens, pe)?;
        let seq = tape.concat(&[bound.var(self.cls), tokens], 0)?;
        let encoded = self.encoder.forward(tape, bound, seq)?;
        Ok(tape.slice(encoded, 0, 0, 1)?)
    }
}
