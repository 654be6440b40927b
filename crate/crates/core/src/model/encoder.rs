use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::params::{normal, xavier, Bound, ParamId, ParamStore};
use crate::diffcore::{DiffError, Tape, Tensor, Var};

#[derive(Debug, Clone)]
pub(crate) struct LinearParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl LinearParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
    ) -> Self {
        Self {
            w: store.insert(format!("{prefix}.w"), xavier(rng, fan_in, fan_out)),
            b: store.insert(format!("{prefix}.b"), Tensor::zeros(&[fan_out])),
        }
    }

    pub fn apply(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, DiffError> {
        tape.linear(x, bound.var(self.w), bound.var(self.b))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct NormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl NormParams {
    pub fn new(store: &mut ParamStore, prefix: &str, width: usize) -> Self {
        Self {
            gamma: store.insert(format!("{prefix}.gamma"), Tensor::filled(&[width], 1.0)),
            beta: store.insert(format!("{prefix}.beta"), Tensor::zeros(&[width])),
        }
    }

    pub fn apply(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, DiffError> {
        tape.layer_norm(x, bound.var(self.gamma), bound.var(self.beta))
    }
}

/// Pre-norm transformer encoder layer: `x + MHA(LN(x))`, then `h + FF(LN(h))`.
#[derive(Debug, Clone)]
pub(crate) struct EncoderLayer {
    width: usize,
    heads: usize,
    ln1: NormParams,
    q: LinearParams,
    k: LinearParams,
    v: LinearParams,
    o: LinearParams,
    ln2: NormParams,
    ff1: LinearParams,
    ff2: LinearParams,
}

impl EncoderLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        width: usize,
        heads: usize,
        d_ff: usize,
    ) -> Self {
        let p = |s: &str| -> String { format!("{prefix}.{s}") };
        Self {
            width,
            heads,
            ln1: NormParams::new(store, &p("ln1"), width),
            q: LinearParams::new(store, rng, &p("attn.q"), width, width),
            k: LinearParams::new(store, rng, &p("attn.k"), width, width),
            v: LinearParams::new(store, rng, &p("attn.v"), width, width),
            o: LinearParams::new(store, rng, &p("attn.o"), width, width),
            ln2: NormParams::new(store, &p("ln2"), width),
            ff1: LinearParams::new(store, rng, &p("ff.1"), width, d_ff),
            ff2: LinearParams::new(store, rng, &p("ff.2"), d_ff, width),
        }
    }

    /// `x` is `[tokens, width]`; attention runs over all tokens with no mask.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, DiffError> {
        let h = self.ln1.apply(tape, bound, x)?;
        let q = self.q.apply(tape, bound, h)?;
        let k = self.k.apply(tape, bound, h)?;
        let v = self.v.apply(tape, bound, h)?;
        let head_dim = self.width / self.heads;
        let scale = 1.0 / libm::sqrt(head_dim as f64);
        let mut outs = Vec::with_capacity(self.heads);
        for head in 0..self.heads {
            let start = head * head_dim;
            let qh = if self.heads == 1 {
                q
            } else {
                tape.slice(q, 1, start, head_dim)?
            };
            let kh = if self.heads == 1 {
                k
            } else {
                tape.slice(k, 1, start, head_dim)?
            };
            let vh = if self.heads == 1 {
                v
            } else {
                tape.slice(v, 1, start, head_dim)?
            };
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale)?;
            let attn = tape.softmax_lastdim(scores)?;
            outs.push(tape.matmul_unordered(attn, vh)?);
        }
        let merged = if outs.len() == 1 {
            outs[0]
        } else {
            tape.concat(&outs, 1)?
        };
        let attn_out = self.o.apply(tape, bound, merged)?;
        let x = tape.add(x, attn_out)?;

        let h = self.ln2.apply(tape, bound, x)?;
        let h = self.ff1.apply(tape, bound, h)?;
        let h = tape.gelu(h)?;
        let h = self.ff2.apply(tape, bound, h)?;
        tape.add(x, h)
    }
}

/// Stack of encoder layers followed by a final layer norm.
#[derive(Debug, Clone)]
pub(crate) struct Encoder {
    layers: Vec<EncoderLayer>,
    norm: NormParams,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        width: usize,
        layers: usize,
        heads: usize,
        d_ff: usize,
    ) -> Self {
        let layers = (0..layers)
            .map(|l| EncoderLayer::new(store, rng, &format!("{prefix}.layer.{l}"), width, heads, d_ff))
            .collect();
        Self {
            layers,
            norm: NormParams::new(store, &format!("{prefix}.norm"), width),
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, mut x: Var) -> Result<Var, DiffError> {
        for layer in &self.layers {
            x = layer.forward(tape, bound, x)?;
        }
        self.norm.apply(tape, bound, x)
    }
}

pub(crate) fn init_token<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, name: String, width: usize) -> ParamId {
    store.insert(name, normal(rng, &[1, width], 0.02))
}
