use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{EncoderModel, EncoderShape, ENCODER_PARAM_COUNT};
use crate::data::{BatchStream, TrainingExample};
use crate::error::{Result, SmorlError};
use crate::numerics::{Adam, DenseMatrix, Tape};
use crate::rewards::DiversityEmbedding;

/// Mean cross-entropy of the decoder over a batch, with gradients in
/// parameter order (`None` for a frozen embedding).
pub fn supervised_loss_and_grads(
    model: &EncoderModel,
    batch: &[&TrainingExample],
) -> Result<(f64, Vec<Option<DenseMatrix>>)> {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, 0);
    let prefixes: Vec<&[usize]> = batch.iter().map(|e| e.prefix.as_slice()).collect();
    let targets: Vec<usize> = batch.iter().map(|e| e.target - 1).collect();
    let state = model.encode_on(&mut tape, &vars, &prefixes)?;
    let logits = model.decode_on(&mut tape, &vars, state)?;
    let loss = tape.softmax_xent(logits, &targets)?;
    let value = tape.scalar(loss);
    let mut grads = tape.backward(loss)?;
    let out = (0..ENCODER_PARAM_COUNT).map(|i| grads.take(i)).collect();
    Ok((value, out))
}

/// One Adam update of `model` on the supervised loss. Returns the loss.
pub fn supervised_step(model: &mut EncoderModel, opt: &mut Adam, batch: &[&TrainingExample]) -> Result<f64> {
    let (loss, grads) = supervised_loss_and_grads(model, batch)?;
    if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(SmorlError::Training(format!("supervised loss diverged ({loss})")));
    }
    let grad_refs: Vec<Option<&DenseMatrix>> = grads.iter().map(Option::as_ref).collect();
    let mut params: Vec<&mut DenseMatrix> = model.params_mut().iter_mut().collect();
    opt.step(&mut params, &grad_refs);
    Ok(loss)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub embed_size: usize,
    pub hidden_size: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            steps: 5_000,
            batch_size: 256,
            learning_rate: 0.01,
            embed_size: 64,
            hidden_size: 64,
            seed: 0,
        }
    }
}

/// Plain cross-entropy training of a fresh model on `examples`.
pub fn train_supervised(n_items: usize, examples: &[TrainingExample], cfg: &PretrainConfig) -> Result<EncoderModel> {
    let shape = EncoderShape {
        n_items,
        embed_size: cfg.embed_size,
        hidden_size: cfg.hidden_size,
    };
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = EncoderModel::init(shape, &mut init_rng);
    let mut opt = Adam::new(cfg.learning_rate, model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut stream = BatchStream::new(examples.len(), cfg.batch_size);
    for step in 0..cfg.steps {
        let idx = stream.next_batch(&mut rng);
        if idx.is_empty() {
            break;
        }
        let batch: Vec<&TrainingExample> = idx.iter().map(|&i| &examples[i]).collect();
        supervised_step(&mut model, &mut opt, &batch)
            .map_err(|e| SmorlError::Training(format!("pretraining step {step}: {e}")))?;
    }
    Ok(model)
}

/// Trains a supervised-only model and keeps its item embedding, frozen.
pub fn pretrain_diversity_embedding(
    n_items: usize,
    train_examples: &[TrainingExample],
    cfg: &PretrainConfig,
) -> Result<DiversityEmbedding> {
    let model = train_supervised(n_items, train_examples, cfg)?;
    Ok(DiversityEmbedding::new(model.embedding().clone()))
}
