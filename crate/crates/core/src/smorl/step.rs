//! Loss of one alternating double-Q update: the supervised cross-entropy of
//! the copy being trained plus `α` times its scalarized TD loss against the
//! other copy's bootstrap values.

use serde::{Deserialize, Serialize};

use super::head::{select_actions, Objective, SmorlHead, HEAD_PARAM_COUNT};
use crate::data::{ItemCatalog, TrainingExample};
use crate::encoder::{argmax_item, EncoderModel, ENCODER_PARAM_COUNT};
use crate::error::{Result, SmorlError};
use crate::numerics::{DenseMatrix, Tape};
use crate::rewards::{stack_rewards, DiversityEmbedding, RewardVector, OBJECTIVES};

/// Encoder, supervised decoder and Q head: one of the two parameter copies.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub encoder: EncoderModel,
    pub head: SmorlHead,
}

pub const AGENT_PARAM_COUNT: usize = ENCODER_PARAM_COUNT + HEAD_PARAM_COUNT;

impl Agent {
    pub fn params(&self) -> impl Iterator<Item = &DenseMatrix> {
        self.encoder.params().iter().chain(self.head.params())
    }

    pub fn params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.encoder
            .params_mut()
            .iter_mut()
            .chain(self.head.params_mut().iter_mut())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite() && self.head.is_finite()
    }
}

/// Inputs to the diversity and novelty rewards.
#[derive(Clone, Copy, Debug)]
pub struct RewardContext<'a> {
    pub catalog: &'a ItemCatalog,
    pub diversity: Option<&'a DiversityEmbedding>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub supervised: f64,
    pub sdql: f64,
    pub total: f64,
}

/// Per-example quantities entering the TD error.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SdqlTerms {
    /// `Q(s_t, a_t)` of the updated copy.
    pub taken: Vec<[f64; OBJECTIVES]>,
    /// Greedy next action chosen by the updated copy at `s_{t+1}`.
    pub next_actions: Vec<usize>,
    /// Bootstrap copy's Q-values at its own `s'_{t+1}` for the greedy action.
    pub bootstrap: Vec<[f64; OBJECTIVES]>,
    /// Top-1 item of the updated copy's supervised head at `s_t`.
    pub predictions: Vec<usize>,
    pub rewards: Vec<RewardVector>,
}

/// `mean_b (wᵀ(r_b + γ·Q_boot_b − Q_taken_b))²`.
pub fn sdql_loss(terms: &SdqlTerms, objective: &Objective) -> Result<f64> {
    let w = &objective.weights;
    let n = terms.taken.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for b in 0..n {
        let r = terms.rewards[b].to_array();
        let mut td = 0.0;
        for z in 0..OBJECTIVES {
            td += w[z] * (r[z] + objective.gamma * terms.bootstrap[b][z] - terms.taken[b][z]);
        }
        if !td.is_finite() {
            return Err(SmorlError::Training(format!("non-finite TD error at batch row {b}")));
        }
        sum += td * td;
    }
    Ok(sum / n as f64)
}

pub struct StepOutput {
    pub losses: StepLosses,
    pub terms: SdqlTerms,
    /// Gradients for the updated copy, encoder parameters then head.
    pub updated_grads: Vec<DenseMatrix>,
    /// Gradients reaching the bootstrap copy; identically zero.
    pub bootstrap_grads: Vec<DenseMatrix>,
}

const BOOTSTRAP_SLOT: usize = 1 << 20;

fn grads_or_zero(grads: &mut crate::numerics::Gradients, base: usize, agent: &Agent) -> Vec<DenseMatrix> {
    agent
        .params()
        .enumerate()
        .map(|(i, p)| grads.take(base + i).unwrap_or_else(|| DenseMatrix::zeros(p.rows(), p.cols())))
        .collect()
}

/// Forward and backward pass of `L_s + α·L_SDQL` for `updated`, bootstrapping
/// from `bootstrap`.
///
/// Both copies are placed on the tape, but bootstrap Q-values enter the TD
/// target as detached constants, so no gradient reaches the bootstrap copy.
pub fn smorl_loss_and_grads(
    updated: &Agent,
    bootstrap: &Agent,
    batch: &[&TrainingExample],
    ctx: &RewardContext<'_>,
    objective: &Objective,
) -> Result<StepOutput> {
    let bsz = batch.len();
    let w = objective.weights;
    let prefixes: Vec<&[usize]> = batch.iter().map(|e| e.prefix.as_slice()).collect();
    let next_prefixes: Vec<&[usize]> = batch.iter().map(|e| e.next_prefix.as_slice()).collect();
    let target_cols: Vec<usize> = batch.iter().map(|e| e.target - 1).collect();

    let mut tape = Tape::new();
    let enc = updated.encoder.register(&mut tape, 0);
    let head = updated.head.register(&mut tape, ENCODER_PARAM_COUNT);
    let boot_enc = bootstrap.encoder.register(&mut tape, BOOTSTRAP_SLOT);
    let boot_head = bootstrap.head.register(&mut tape, BOOTSTRAP_SLOT + ENCODER_PARAM_COUNT);

    // Supervised head of the updated copy.
    let state = updated.encoder.encode_on(&mut tape, &enc, &prefixes)?;
    let logits = updated.encoder.decode_on(&mut tape, &enc, state)?;
    let l_s = tape.softmax_xent(logits, &target_cols)?;
    let predictions: Vec<usize> = (0..bsz).map(|b| argmax_item(tape.value(logits).row(b))).collect();

    // Q(s_t, a_t) of the updated copy.
    let q_now = updated.head.forward_on(&mut tape, &head, state)?;
    let mut taken_vars = Vec::with_capacity(OBJECTIVES);
    for q in q_now {
        taken_vars.push(tape.pick_per_row(q, &target_cols)?);
    }

    // Greedy next action from the updated copy at s_{t+1}.
    let next_state = updated.encoder.encode_batch(&next_prefixes)?;
    let next_q = updated.head.forward_batch(&next_state)?;
    let next_actions = select_actions(&next_q, &w);

    // Bootstrap copy at s'_{t+1}, detached.
    let boot_state = bootstrap.encoder.encode_on(&mut tape, &boot_enc, &next_prefixes)?;
    let boot_q = bootstrap.head.forward_on(&mut tape, &boot_head, boot_state)?;
    let boot_q: Vec<DenseMatrix> = boot_q.iter().map(|&v| tape.value(v).clone()).collect();

    let mut terms = SdqlTerms {
        taken: Vec::with_capacity(bsz),
        next_actions,
        bootstrap: Vec::with_capacity(bsz),
        predictions,
        rewards: Vec::with_capacity(bsz),
    };
    let mut td_target = DenseMatrix::zeros(bsz, 1);
    for (b, ex) in batch.iter().enumerate() {
        let a_star = terms.next_actions[b] - 1;
        let boot = [boot_q[0].get(b, a_star), boot_q[1].get(b, a_star), boot_q[2].get(b, a_star)];
        let reward = stack_rewards(ex.target, ex.last_item(), terms.predictions[b], ctx.diversity, ctx.catalog)?;
        if !reward.in_bounds() {
            return Err(SmorlError::Training(format!("reward {reward:?} out of bounds at batch row {b}")));
        }
        let r = reward.to_array();
        let mut y = 0.0;
        for z in 0..OBJECTIVES {
            y += w[z] * (r[z] + objective.gamma * boot[z]);
        }
        td_target.set(b, 0, y);
        terms.taken.push([
            tape.value(taken_vars[0]).get(b, 0),
            tape.value(taken_vars[1]).get(b, 0),
            tape.value(taken_vars[2]).get(b, 0),
        ]);
        terms.bootstrap.push(boot);
        terms.rewards.push(reward);
    }

    let mut scalarized = tape.scale(taken_vars[0], w[0]);
    for z in 1..OBJECTIVES {
        let term = tape.scale(taken_vars[z], w[z]);
        scalarized = tape.add(scalarized, term)?;
    }
    let target = tape.constant(td_target);
    let td = tape.sub(target, scalarized)?;
    let l_sdql = tape.mean_square(td);
    let weighted = tape.scale(l_sdql, objective.alpha);
    let total = tape.add(l_s, weighted)?;

    let losses = StepLosses {
        supervised: tape.scalar(l_s),
        sdql: tape.scalar(l_sdql),
        total: tape.scalar(total),
    };
    if !(losses.supervised.is_finite() && losses.sdql.is_finite() && losses.total.is_finite()) {
        return Err(SmorlError::Training(format!("non-finite loss {losses:?}")));
    }

    let mut grads = tape.backward(total)?;
    let updated_grads = grads_or_zero(&mut grads, 0, updated);
    let bootstrap_grads = grads_or_zero(&mut grads, BOOTSTRAP_SLOT, bootstrap);
    Ok(StepOutput {
        losses,
        terms,
        updated_grads,
        bootstrap_grads,
    })
}
