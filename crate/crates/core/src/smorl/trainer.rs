use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::{Objective, SmorlHead};
use super::step::{smorl_loss_and_grads, Agent, RewardContext, AGENT_PARAM_COUNT};
use crate::checkpoint::Checkpoint;
use crate::data::{make_examples_for, BatchStream, Fold, ItemCatalog, SessionDataset, TrainingExample, SEQ_LEN};
use crate::encoder::{supervised_loss_and_grads, EncoderModel, EncoderShape, ENCODER_PARAM_COUNT};
use crate::error::{Result, SmorlError};
use crate::metrics::{evaluate, MetricsReport, REPORT_KS};
use crate::numerics::{Adam, DenseMatrix};
use crate::rewards::DiversityEmbedding;

const INIT_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const HEAD_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub objective: Objective,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_steps: u64,
    /// Validation cadence in steps; 0 evaluates only after the last step.
    pub eval_every: u64,
    pub seed: u64,
    pub embed_size: usize,
    pub hidden_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::default(),
            batch_size: 256,
            learning_rate: 0.01,
            max_steps: 20_000,
            eval_every: 5_000,
            seed: 0,
            embed_size: 64,
            hidden_size: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        if self.batch_size == 0 {
            return Err(SmorlError::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(SmorlError::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.embed_size == 0 || self.hidden_size == 0 {
            return Err(SmorlError::Config("embedding and hidden sizes must be positive".into()));
        }
        Ok(())
    }

    fn shape(&self, n_items: usize) -> EncoderShape {
        EncoderShape {
            n_items,
            embed_size: self.embed_size,
            hidden_size: self.hidden_size,
        }
    }
}

/// Which parameter copy a step updated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Online,
    Alternate,
}

/// Encoder initialization shared by the SMORL trainer and the supervised
/// baseline.
pub fn init_encoder(n_items: usize, cfg: &TrainConfig) -> EncoderModel {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(INIT_STREAM);
    EncoderModel::init(cfg.shape(n_items), &mut rng)
}

fn train_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TRAIN_STREAM);
    rng
}

#[derive(Clone, Debug, PartialEq)]
struct Learner {
    agent: Agent,
    opt: Adam,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestModel {
    pub step: u64,
    pub ndcg20: f64,
    pub encoder: EncoderModel,
}

/// Both parameter copies, their optimizers and the sampling state.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainerState {
    online: Learner,
    alternate: Learner,
    pub step: u64,
    rng: ChaCha8Rng,
    stream: BatchStream,
    pub branch_counts: [u64; 2],
    pub best: Option<BestModel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub branch: Branch,
    pub l_s: f64,
    pub l_sdql: f64,
    pub l_smorl: f64,
}

impl TrainerState {
    /// Fresh state: `G′, Q′` start as clones of `G, Q`.
    pub fn new(n_items: usize, n_examples: usize, cfg: &TrainConfig) -> Self {
        let encoder = init_encoder(n_items, cfg);
        let mut head_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        head_rng.set_stream(HEAD_STREAM);
        let head = SmorlHead::init(cfg.hidden_size, n_items, &mut head_rng);
        let agent = Agent { encoder, head };
        let opt = Adam::new(cfg.learning_rate, agent.params());
        let online = Learner { agent, opt };
        TrainerState {
            alternate: online.clone(),
            online,
            step: 0,
            rng: train_rng(cfg.seed),
            stream: BatchStream::new(n_examples, cfg.batch_size),
            branch_counts: [0, 0],
            best: None,
        }
    }

    pub fn online(&self) -> &Agent {
        &self.online.agent
    }

    pub fn alternate(&self) -> &Agent {
        &self.alternate.agent
    }

    pub fn optimizers(&self) -> (&Adam, &Adam) {
        (&self.online.opt, &self.alternate.opt)
    }

    /// Indices of the next mini-batch.
    pub fn next_batch(&mut self) -> Vec<usize> {
        self.stream.next_batch(&mut self.rng)
    }

    /// Draws the branch and applies one gradient step of `L_s + α·L_SDQL` to
    /// the chosen copy, bootstrapping from the other.
    pub fn smorl_step(
        &mut self,
        batch: &[&TrainingExample],
        ctx: &RewardContext<'_>,
        objective: &Objective,
    ) -> Result<StepRecord> {
        let z: f64 = self.rng.gen();
        let branch = if z < 0.5 { Branch::Online } else { Branch::Alternate };
        let (upd, boot) = match branch {
            Branch::Online => (&mut self.online, &self.alternate),
            Branch::Alternate => (&mut self.alternate, &self.online),
        };
        let step = self.step + 1;
        let out = smorl_loss_and_grads(&upd.agent, &boot.agent, batch, ctx, objective)
            .map_err(|e| SmorlError::Training(format!("step {step}: {e}")))?;
        if out.updated_grads.iter().any(|g| !g.is_finite()) {
            return Err(SmorlError::Training(format!("step {step}: non-finite gradient")));
        }
        let grads: Vec<Option<&DenseMatrix>> = out
            .updated_grads
            .iter()
            .enumerate()
            .map(|(i, g)| (i != 0 || !upd.agent.encoder.embedding_frozen()).then_some(g))
            .collect();
        let mut params = upd.agent.params_mut();
        upd.opt.step(&mut params, &grads);
        if !upd.agent.is_finite() {
            return Err(SmorlError::Training(format!("step {step}: parameters became non-finite")));
        }
        self.step = step;
        self.branch_counts[branch as usize] += 1;
        Ok(StepRecord {
            step,
            branch,
            l_s: out.losses.supervised,
            l_sdql: out.losses.sdql,
            l_smorl: out.losses.total,
        })
    }

    pub fn to_checkpoint(&self, cfg: &TrainConfig) -> Result<Checkpoint> {
        let stream = serde_json::to_value(&self.stream).map_err(|e| SmorlError::Format(e.to_string()))?;
        let config = serde_json::to_value(cfg).map_err(|e| SmorlError::Format(e.to_string()))?;
        let mut ck = Checkpoint::new(serde_json::json!({
            "kind": "trainer_state",
            "step": self.step,
            "rng_seed": hex::encode(self.rng.get_seed()),
            "rng_stream": self.rng.get_stream(),
            "rng_word_pos": self.rng.get_word_pos().to_string(),
            "stream": stream,
            "branch_counts": self.branch_counts,
            "online_adam_t": self.online.opt.steps(),
            "alternate_adam_t": self.alternate.opt.steps(),
            "best_step": self.best.as_ref().map(|b| b.step),
            "best_ndcg20": self.best.as_ref().map(|b| b.ndcg20),
            "embedding_frozen": self.online.agent.encoder.embedding_frozen(),
            "config": config,
        }));
        for (name, l) in [("online", &self.online), ("alternate", &self.alternate)] {
            l.agent.encoder.to_checkpoint(&format!("{name}."), &mut ck);
            l.agent.head.to_checkpoint(&format!("{name}."), &mut ck);
            let (m, v) = l.opt.moments();
            for (i, (m, v)) in m.iter().zip(v).enumerate() {
                ck.push(format!("{name}.adam.m.{i}"), m.clone());
                ck.push(format!("{name}.adam.v.{i}"), v.clone());
            }
        }
        if let Some(b) = &self.best {
            b.encoder.to_checkpoint("best.", &mut ck);
        }
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint, cfg: &TrainConfig) -> Result<Self> {
        if ck.meta_str("kind") != Some("trainer_state") {
            return Err(SmorlError::Format("checkpoint is not a trainer state".into()));
        }
        let bad = |what: &str| SmorlError::Format(format!("trainer checkpoint: bad {what}"));
        let meta = &ck.meta;
        let frozen = meta.get("embedding_frozen").and_then(|v| v.as_bool()).unwrap_or(false);
        let learner = |name: &str, t_key: &str| -> Result<Learner> {
            let mut encoder = EncoderModel::from_checkpoint(&format!("{name}."), ck)?;
            encoder.set_embedding_frozen(frozen);
            let head = SmorlHead::from_checkpoint(&format!("{name}."), ck)?;
            let agent = Agent { encoder, head };
            let mut opt = Adam::new(cfg.learning_rate, agent.params());
            let mut m = Vec::with_capacity(AGENT_PARAM_COUNT);
            let mut v = Vec::with_capacity(AGENT_PARAM_COUNT);
            for i in 0..AGENT_PARAM_COUNT {
                m.push(ck.get(&format!("{name}.adam.m.{i}"))?.clone());
                v.push(ck.get(&format!("{name}.adam.v.{i}"))?.clone());
            }
            let t = meta.get(t_key).and_then(|v| v.as_u64()).ok_or_else(|| bad(t_key))?;
            opt.restore(t, m, v);
            Ok(Learner { agent, opt })
        };
        let online = learner("online", "online_adam_t")?;
        let alternate = learner("alternate", "alternate_adam_t")?;

        let seed_hex = meta.get("rng_seed").and_then(|v| v.as_str()).ok_or_else(|| bad("rng_seed"))?;
        let seed: [u8; 32] = hex::decode(seed_hex)
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| bad("rng_seed"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(meta.get("rng_stream").and_then(|v| v.as_u64()).ok_or_else(|| bad("rng_stream"))?);
        let word_pos: u128 = meta
            .get("rng_word_pos")
            .and_then(|v| v.as_str())
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("rng_word_pos"))?;
        rng.set_word_pos(word_pos);

        let stream: BatchStream = meta
            .get("stream")
            .cloned()
            .and_then(|v| serde_json::from_value(v).ok())
            .ok_or_else(|| bad("stream"))?;
        let branch_counts: [u64; 2] = meta
            .get("branch_counts")
            .cloned()
            .and_then(|v| serde_json::from_value(v).ok())
            .ok_or_else(|| bad("branch_counts"))?;
        let best = match (
            meta.get("best_step").and_then(|v| v.as_u64()),
            meta.get("best_ndcg20").and_then(|v| v.as_f64()),
        ) {
            (Some(step), Some(ndcg20)) => Some(BestModel {
                step,
                ndcg20,
                encoder: EncoderModel::from_checkpoint("best.", ck)?,
            }),
            _ => None,
        };
        Ok(TrainerState {
            online,
            alternate,
            step: ck.meta_u64("step")?,
            rng,
            stream,
            branch_counts,
            best,
        })
    }

    pub fn save(&self, cfg: &TrainConfig, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint(cfg)?.save(path)
    }

    pub fn load(cfg: &TrainConfig, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?, cfg)
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub branch: Branch,
    #[serde(rename = "L_s")]
    pub l_s: f64,
    #[serde(rename = "L_SDQL")]
    pub l_sdql: f64,
    #[serde(rename = "L_SMORL")]
    pub l_smorl: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub validation: Option<MetricsReport>,
}

/// Hooks invoked by [`train`]; both default to no-ops.
pub trait TrainObserver {
    fn on_step(&mut self, _record: &LogRecord) -> Result<()> {
        Ok(())
    }

    /// Called after each validation pass, once the best model is updated.
    fn on_eval(&mut self, _state: &TrainerState, _record: &LogRecord) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// Data a training run reads.
#[derive(Clone, Copy, Debug)]
pub struct TrainInputs<'a> {
    pub dataset: &'a SessionDataset,
    pub fold: &'a Fold,
    pub catalog: &'a ItemCatalog,
    pub diversity: Option<&'a DiversityEmbedding>,
}

pub struct TrainOutcome {
    /// Best online encoder by validation NDCG@20, or the final one if no
    /// validation pass ran.
    pub model: EncoderModel,
    pub state: TrainerState,
    pub log: Vec<LogRecord>,
}

impl<'a> TrainInputs<'a> {
    fn check(&self, cfg: &TrainConfig) -> Result<()> {
        cfg.validate()?;
        if cfg.objective.weights[1] > 0.0 && self.diversity.is_none() {
            return Err(SmorlError::Config(
                "diversity weight is positive but no diversity embedding was supplied".into(),
            ));
        }
        if let Some(e) = self.diversity {
            if e.n_items() != self.dataset.n_items() {
                return Err(SmorlError::Config(format!(
                    "diversity embedding covers {} items, dataset has {}",
                    e.n_items(),
                    self.dataset.n_items()
                )));
            }
        }
        if self.catalog.n_items() != self.dataset.n_items() {
            return Err(SmorlError::Config("catalog and dataset item counts differ".into()));
        }
        Ok(())
    }
}

/// Runs the alternating double-Q loop from `resume` (or a fresh state) up to
/// `cfg.max_steps`, validating the online copy's supervised head at the
/// configured cadence and after the final step.
pub fn train(
    inputs: TrainInputs<'_>,
    cfg: &TrainConfig,
    resume: Option<TrainerState>,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    inputs.check(cfg)?;
    let examples = make_examples_for(inputs.dataset, &inputs.fold.train, SEQ_LEN);
    if examples.is_empty() && cfg.max_steps > 0 {
        return Err(SmorlError::EmptyDataset);
    }
    let mut state = resume.unwrap_or_else(|| TrainerState::new(inputs.dataset.n_items(), examples.len(), cfg));
    let ctx = RewardContext {
        catalog: inputs.catalog,
        diversity: inputs.diversity,
    };
    let mut log = Vec::new();
    while state.step < cfg.max_steps {
        let idx = state.next_batch();
        let batch: Vec<&TrainingExample> = idx.iter().map(|&i| &examples[i]).collect();
        let rec = state.smorl_step(&batch, &ctx, &cfg.objective)?;
        let mut record = LogRecord {
            step: rec.step,
            branch: rec.branch,
            l_s: rec.l_s,
            l_sdql: rec.l_sdql,
            l_smorl: rec.l_smorl,
            validation: None,
        };
        let due = (cfg.eval_every > 0 && rec.step % cfg.eval_every == 0) || rec.step == cfg.max_steps;
        if due && !inputs.fold.validation.is_empty() {
            let report = evaluate(
                &state.online.agent.encoder,
                inputs.dataset,
                &inputs.fold.validation,
                inputs.catalog,
                inputs.diversity,
                &REPORT_KS,
            )?;
            let score = report.ndcg(20).unwrap_or(0.0);
            if state.best.as_ref().is_none_or(|b| score > b.ndcg20) {
                state.best = Some(BestModel {
                    step: rec.step,
                    ndcg20: score,
                    encoder: state.online.agent.encoder.clone(),
                });
            }
            log::info!("step {} validation NDCG@20 {score:.4}", rec.step);
            record.validation = Some(report);
        }
        observer.on_step(&record)?;
        if record.validation.is_some() {
            observer.on_eval(&state, &record)?;
        }
        log.push(record);
    }
    let model = state
        .best
        .as_ref()
        .map(|b| b.encoder.clone())
        .unwrap_or_else(|| state.online.agent.encoder.clone());
    Ok(TrainOutcome { model, state, log })
}

/// Online encoder, alternate encoder and the per-step branch and `L_s`.
pub type TwinRun = (EncoderModel, EncoderModel, Vec<(Branch, f64)>);

/// Supervised-only reference trainer with the same two-copy bookkeeping and
/// random draws as [`train`], updating the chosen copy on `L_s` alone.
/// Returns the online and alternate encoders and the per-step `L_s`.
pub fn train_supervised_twin(
    n_items: usize,
    examples: &[TrainingExample],
    cfg: &TrainConfig,
) -> Result<TwinRun> {
    cfg.validate()?;
    let mut copies = [init_encoder(n_items, cfg), init_encoder(n_items, cfg)];
    let mut opts = [
        Adam::new(cfg.learning_rate, copies[0].params()),
        Adam::new(cfg.learning_rate, copies[1].params()),
    ];
    let mut rng = train_rng(cfg.seed);
    let mut stream = BatchStream::new(examples.len(), cfg.batch_size);
    let mut losses = Vec::with_capacity(cfg.max_steps as usize);
    for step in 1..=cfg.max_steps {
        let idx = stream.next_batch(&mut rng);
        let batch: Vec<&TrainingExample> = idx.iter().map(|&i| &examples[i]).collect();
        let z: f64 = rng.gen();
        let (c, branch) = if z < 0.5 { (0, Branch::Online) } else { (1, Branch::Alternate) };
        let (loss, grads) = supervised_loss_and_grads(&copies[c], &batch)
            .map_err(|e| SmorlError::Training(format!("step {step}: {e}")))?;
        let refs: Vec<Option<&DenseMatrix>> = grads.iter().map(Option::as_ref).collect();
        debug_assert_eq!(refs.len(), ENCODER_PARAM_COUNT);
        let mut params: Vec<&mut DenseMatrix> = copies[c].params_mut().iter_mut().collect();
        opts[c].step(&mut params, &refs);
        losses.push((branch, loss));
    }
    let [online, alternate] = copies;
    Ok((online, alternate, losses))
}
