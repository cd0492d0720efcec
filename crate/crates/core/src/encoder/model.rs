use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Result, SmorlError};
use crate::numerics::{DenseMatrix, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderShape {
    pub n_items: usize,
    pub embed_size: usize,
    pub hidden_size: usize,
}

impl EncoderShape {
    pub fn new(n_items: usize) -> Self {
        EncoderShape {
            n_items,
            embed_size: 64,
            hidden_size: 64,
        }
    }

    /// Shapes in [`EncoderParam`] order.
    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        let (n, e, h) = (self.n_items, self.embed_size, self.hidden_size);
        let mut out = vec![(n + 1, e)];
        for _ in 0..3 {
            out.extend([(e, h), (h, h), (1, h)]);
        }
        out.extend([(h, n), (1, n)]);
        out
    }
}

/// Parameter layout of an [`EncoderModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(usize)]
pub enum EncoderParam {
    Embedding = 0,
    UpdateInput,
    UpdateHidden,
    UpdateBias,
    ResetInput,
    ResetHidden,
    ResetBias,
    CandidateInput,
    CandidateHidden,
    CandidateBias,
    DecoderWeight,
    DecoderBias,
}

pub const ENCODER_PARAM_COUNT: usize = 12;

pub const ENCODER_PARAM_NAMES: [&str; ENCODER_PARAM_COUNT] = [
    "embedding",
    "gru.update.input",
    "gru.update.hidden",
    "gru.update.bias",
    "gru.reset.input",
    "gru.reset.hidden",
    "gru.reset.bias",
    "gru.candidate.input",
    "gru.candidate.hidden",
    "gru.candidate.bias",
    "decoder.weight",
    "decoder.bias",
];

/// Item embedding, single-layer GRU and a fully connected decoder over the
/// `n` real items.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderModel {
    shape: EncoderShape,
    params: Vec<DenseMatrix>,
    embedding_frozen: bool,
}

/// Tape handles for one registration of an [`EncoderModel`].
#[derive(Clone, Copy, Debug)]
pub struct EncoderVars {
    vars: [Var; ENCODER_PARAM_COUNT],
}

impl EncoderVars {
    #[inline]
    pub fn get(&self, p: EncoderParam) -> Var {
        self.vars[p as usize]
    }
}

impl EncoderModel {
    /// Embedding rows uniform in ±0.05; GRU and decoder weights uniform in
    /// ±1/√fan_in; biases zero.
    pub fn init<R: Rng + ?Sized>(shape: EncoderShape, rng: &mut R) -> Self {
        let EncoderShape {
            n_items,
            embed_size: e,
            hidden_size: h,
        } = shape;
        let ui = 1.0 / (e as f64).sqrt();
        let uh = 1.0 / (h as f64).sqrt();
        let mut params = Vec::with_capacity(ENCODER_PARAM_COUNT);
        params.push(DenseMatrix::random_uniform(n_items + 1, e, 0.05, rng));
        for _ in 0..3 {
            params.push(DenseMatrix::random_uniform(e, h, ui, rng));
            params.push(DenseMatrix::random_uniform(h, h, uh, rng));
            params.push(DenseMatrix::zeros(1, h));
        }
        params.push(DenseMatrix::random_uniform(h, n_items, uh, rng));
        params.push(DenseMatrix::zeros(1, n_items));
        EncoderModel {
            shape,
            params,
            embedding_frozen: false,
        }
    }

    pub fn shape(&self) -> EncoderShape {
        self.shape
    }

    pub fn n_items(&self) -> usize {
        self.shape.n_items
    }

    pub fn param(&self, p: EncoderParam) -> &DenseMatrix {
        &self.params[p as usize]
    }

    pub fn param_mut(&mut self, p: EncoderParam) -> &mut DenseMatrix {
        &mut self.params[p as usize]
    }

    pub fn params(&self) -> &[DenseMatrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.params
    }

    pub fn embedding(&self) -> &DenseMatrix {
        self.param(EncoderParam::Embedding)
    }

    pub fn set_embedding_frozen(&mut self, frozen: bool) {
        self.embedding_frozen = frozen;
    }

    pub fn embedding_frozen(&self) -> bool {
        self.embedding_frozen
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(DenseMatrix::is_finite)
    }

    /// Puts every parameter on `tape`; trainable ones get slots
    /// `slot_base + index`. A frozen embedding enters as a constant.
    pub fn register<'p>(&'p self, tape: &mut Tape<'p>, slot_base: usize) -> EncoderVars {
        let vars = std::array::from_fn(|i| {
            if i == EncoderParam::Embedding as usize && self.embedding_frozen {
                tape.constant_ref(&self.params[i])
            } else {
                tape.param(slot_base + i, &self.params[i])
            }
        });
        EncoderVars { vars }
    }

    /// Registers every parameter as a constant, for forward-only passes.
    pub fn register_frozen<'p>(&'p self, tape: &mut Tape<'p>) -> EncoderVars {
        EncoderVars {
            vars: std::array::from_fn(|i| tape.constant_ref(&self.params[i])),
        }
    }

    /// Runs the GRU left to right over every position of each prefix and
    /// returns the final hidden states as a `batch × hidden` node.
    pub fn encode_on(&self, tape: &mut Tape<'_>, vars: &EncoderVars, prefixes: &[&[usize]]) -> Result<Var> {
        use EncoderParam::*;
        let batch = prefixes.len();
        let seq_len = prefixes.first().map_or(0, |p| p.len());
        if let Some(bad) = prefixes.iter().find(|p| p.len() != seq_len) {
            return Err(SmorlError::Dimension {
                op: "encode prefix length",
                left: (1, seq_len),
                right: (1, bad.len()),
            });
        }
        let mut h = tape.constant(DenseMatrix::zeros(batch, self.shape.hidden_size));
        let mut idx = vec![0usize; batch];
        for t in 0..seq_len {
            for (slot, p) in idx.iter_mut().zip(prefixes) {
                *slot = p[t];
            }
            let x = tape.gather(vars.get(Embedding), &idx)?;

            let zx = tape.affine(x, vars.get(UpdateInput), vars.get(UpdateBias))?;
            let zh = tape.matmul(h, vars.get(UpdateHidden))?;
            let z_pre = tape.add(zx, zh)?;
            let z = tape.sigmoid(z_pre);

            let rx = tape.affine(x, vars.get(ResetInput), vars.get(ResetBias))?;
            let rh = tape.matmul(h, vars.get(ResetHidden))?;
            let r_pre = tape.add(rx, rh)?;
            let r = tape.sigmoid(r_pre);

            let cx = tape.affine(x, vars.get(CandidateInput), vars.get(CandidateBias))?;
            let rh_state = tape.mul(r, h)?;
            let ch = tape.matmul(rh_state, vars.get(CandidateHidden))?;
            let c_pre = tape.add(cx, ch)?;
            let cand = tape.tanh(c_pre);

            // h' = (1 - z) ⊙ h + z ⊙ cand
            let keep = tape.one_minus(z);
            let kept = tape.mul(keep, h)?;
            let fresh = tape.mul(z, cand)?;
            h = tape.add(kept, fresh)?;
        }
        Ok(h)
    }

    pub fn decode_on(&self, tape: &mut Tape<'_>, vars: &EncoderVars, state: Var) -> Result<Var> {
        tape.affine(state, vars.get(EncoderParam::DecoderWeight), vars.get(EncoderParam::DecoderBias))
    }

    /// Final hidden states for a batch of prefixes, without gradients.
    pub fn encode_batch(&self, prefixes: &[&[usize]]) -> Result<DenseMatrix> {
        let mut tape = Tape::new();
        let vars = self.register_frozen(&mut tape);
        let h = self.encode_on(&mut tape, &vars, prefixes)?;
        Ok(tape.value(h).clone())
    }

    pub fn encode(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        Ok(self.encode_batch(&[prefix])?.into_values())
    }

    /// `y = s · W_d + b_d` for each row of `states`.
    pub fn decode_logits(&self, states: &DenseMatrix) -> Result<DenseMatrix> {
        states.affine(self.param(EncoderParam::DecoderWeight), self.param(EncoderParam::DecoderBias))
    }

    pub fn to_checkpoint(&self, prefix: &str, ck: &mut Checkpoint) {
        for (name, p) in ENCODER_PARAM_NAMES.iter().zip(&self.params) {
            ck.push(format!("{prefix}{name}"), p.clone());
        }
    }

    pub fn from_checkpoint(prefix: &str, ck: &Checkpoint) -> Result<Self> {
        let params = ENCODER_PARAM_NAMES
            .iter()
            .map(|name| ck.get(&format!("{prefix}{name}")).cloned())
            .collect::<Result<Vec<_>>>()?;
        let emb = &params[EncoderParam::Embedding as usize];
        let shape = EncoderShape {
            n_items: emb.rows().saturating_sub(1),
            embed_size: emb.cols(),
            hidden_size: params[EncoderParam::UpdateHidden as usize].rows(),
        };
        for (p, expect) in params.iter().zip(shape.param_shapes()) {
            if p.shape() != expect {
                return Err(SmorlError::Dimension {
                    op: "encoder checkpoint",
                    left: p.shape(),
                    right: expect,
                });
            }
        }
        Ok(EncoderModel {
            shape,
            params,
            embedding_frozen: false,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut ck = Checkpoint::new(serde_json::json!({
            "kind": "encoder",
            "n_items": self.shape.n_items,
            "embed_size": self.shape.embed_size,
            "hidden_size": self.shape.hidden_size,
        }));
        self.to_checkpoint("", &mut ck);
        ck.save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        Self::from_checkpoint("", &ck)
    }
}
