use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::encoder::{Encoder, LinearParams};
use super::params::{Bound, ParamStore};
use super::{ModelConfig, ModelError};
use crate::diffcore::{Tape, Var};
use crate::domain::BOX_CUE;

/// Group-aware fusion: per-cue projections summed into one token per object, then
/// self-attention across all objects, an output projection and L2 normalisation.
#[derive(Debug, Clone)]
pub(crate) struct Gaffe {
    projections: BTreeMap<usize, LinearParams>,
    encoder: Encoder,
    out: LinearParams,
}

impl Gaffe {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, cfg: &ModelConfig) -> Self {
        let projections = cfg
            .cue_ids()
            .map(|k| {
                (
                    k,
                    LinearParams::new(store, rng, &format!("gaffe.proj.{k}"), cfg.d_model, cfg.d_fuse),
                )
            })
            .collect();
        Self {
            projections,
            encoder: Encoder::new(store, rng, "gaffe", cfg.d_fuse, cfg.layers, cfg.heads, cfg.gaffe_d_ff),
            out: LinearParams::new(store, rng, "gaffe.out", cfg.d_fuse, cfg.d_emb),
        }
    }

    /// `cue_tokens[i]` maps each present cue of object `i` to its `[1, d_model]`
    /// temporal encoding. Returns `[objects, d_emb]` with unit-norm rows.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        cue_tokens: &[BTreeMap<usize, Var>],
    ) -> Result<Var, ModelError> {
        if cue_tokens.is_empty() {
            return Err(ModelError::NoObjects);
        }
        let mut fused = Vec::with_capacity(cue_tokens.len());
        for (object, cues) in cue_tokens.iter().enumerate() {
            if !cues.contains_key(&BOX_CUE) {
                return Err(ModelError::MissingMandatoryCue { object });
            }
            let mut acc: Option<Var> = None;
            for (k, &y) in cues {
                let proj = self.projections.get(k).ok_or(ModelError::UnknownCue { cue: *k })?;
                let p = proj.apply(tape, bound, y)?;
                acc = Some(match acc {
                    None => p,
                    Some(a) => tape.add(a, p)?,
                });
            }
            fused.push(acc.expect("cue 0 present"));
        }
        let tokens = if fused.len() == 1 {
            fused[0]
        } else {
            tape.concat(&fused, 0)?
        };
        let encoded = self.encoder.forward(tape, bound, tokens)?;
        let projected = self.out.apply(tape, bound, encoded)?;
        Ok(tape.l2_normalize_lastdim(projected)?)
    }
}
