use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Result, SmorlError};
use crate::numerics::{DenseMatrix, Tape, Var};
use crate::rewards::OBJECTIVES;

/// Objective order shared by Q columns, rewards and weights.
pub const OBJECTIVE_NAMES: [&str; OBJECTIVES] = ["accuracy", "diversity", "novelty"];

pub const HEAD_PARAM_COUNT: usize = 2 * OBJECTIVES;

const HEAD_PARAM_NAMES: [&str; HEAD_PARAM_COUNT] = [
    "q.accuracy.weight",
    "q.accuracy.bias",
    "q.diversity.weight",
    "q.diversity.bias",
    "q.novelty.weight",
    "q.novelty.bias",
];

/// Scalarization weights `w`, discount `γ` and loss coefficient `α`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub weights: [f64; OBJECTIVES],
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for Objective {
    fn default() -> Self {
        Objective {
            weights: [1.0, 1.0, 1.0],
            gamma: 0.5,
            alpha: 1.0,
        }
    }
}

impl Objective {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(SmorlError::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(SmorlError::Config(format!("alpha {} must be finite and non-negative", self.alpha)));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(SmorlError::Config(format!("weights {:?} must be non-negative", self.weights)));
        }
        Ok(())
    }
}

/// `f_w(q) = wᵀq`.
#[inline]
pub fn scalarize(q: &[f64; OBJECTIVES], w: &[f64; OBJECTIVES]) -> f64 {
    q[0] * w[0] + q[1] * w[1] + q[2] * w[2]
}

/// Q-values of every action at one state: row `a - 1` holds `Q(s, a)` in
/// `[accuracy, diversity, novelty]` column order.
#[derive(Clone, Debug, PartialEq)]
pub struct QMatrix {
    values: DenseMatrix,
}

impl QMatrix {
    pub fn new(values: DenseMatrix) -> Result<Self> {
        if values.cols() != OBJECTIVES {
            return Err(SmorlError::Dimension {
                op: "QMatrix",
                left: values.shape(),
                right: (values.rows(), OBJECTIVES),
            });
        }
        Ok(QMatrix { values })
    }

    pub fn n_actions(&self) -> usize {
        self.values.rows()
    }

    pub fn row(&self, item: usize) -> [f64; OBJECTIVES] {
        let r = self.values.row(item - 1);
        [r[0], r[1], r[2]]
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }
}

/// Action maximizing the scalarized Q-value; ties go to the lowest index.
pub fn select_action(q: &QMatrix, w: &[f64; OBJECTIVES]) -> usize {
    let mut best = 1;
    let mut best_v = f64::NEG_INFINITY;
    for a in 1..=q.n_actions() {
        let v = scalarize(&q.row(a), w);
        if v > best_v {
            best_v = v;
            best = a;
        }
    }
    best
}

/// Row-wise [`select_action`] over a batch of per-objective `batch × n` Q tables.
pub fn select_actions(q: &[DenseMatrix; OBJECTIVES], w: &[f64; OBJECTIVES]) -> Vec<usize> {
    let (rows, n) = q[0].shape();
    (0..rows)
        .map(|r| {
            let (qa, qd, qn) = (q[0].row(r), q[1].row(r), q[2].row(r));
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for a in 0..n {
                let v = scalarize(&[qa[a], qd[a], qn[a]], w);
                if v > best_v {
                    best_v = v;
                    best = a;
                }
            }
            best + 1
        })
        .collect()
}

/// Three action-indexed Q layers on top of the encoder state, one per
/// objective, with identity output activation.
#[derive(Clone, Debug, PartialEq)]
pub struct SmorlHead {
    params: Vec<DenseMatrix>,
}

#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    vars: [Var; HEAD_PARAM_COUNT],
}

impl SmorlHead {
    /// Weights uniform in ±1/√hidden, biases zero.
    pub fn init<R: Rng + ?Sized>(hidden: usize, n_items: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut params = Vec::with_capacity(HEAD_PARAM_COUNT);
        for _ in 0..OBJECTIVES {
            params.push(DenseMatrix::random_uniform(hidden, n_items, bound, rng));
            params.push(DenseMatrix::zeros(1, n_items));
        }
        SmorlHead { params }
    }

    /// Builds a head from `(H_z, b_z)` pairs in objective order.
    pub fn from_layers(layers: [(DenseMatrix, DenseMatrix); OBJECTIVES]) -> Result<Self> {
        let mut params = Vec::with_capacity(HEAD_PARAM_COUNT);
        for (h, b) in layers {
            if b.rows() != 1 || b.cols() != h.cols() {
                return Err(SmorlError::Dimension {
                    op: "SmorlHead layer",
                    left: h.shape(),
                    right: b.shape(),
                });
            }
            params.push(h);
            params.push(b);
        }
        if params.chunks(2).any(|p| p[0].shape() != params[0].shape()) {
            return Err(SmorlError::Range("Q layers must share a shape".into()));
        }
        Ok(SmorlHead { params })
    }

    pub fn n_items(&self) -> usize {
        self.params[0].cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.params[0].rows()
    }

    pub fn params(&self) -> &[DenseMatrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(DenseMatrix::is_finite)
    }

    pub fn register<'p>(&'p self, tape: &mut Tape<'p>, slot_base: usize) -> HeadVars {
        HeadVars {
            vars: std::array::from_fn(|i| tape.param(slot_base + i, &self.params[i])),
        }
    }

    /// Per-objective `batch × n` Q tables for the states in `state`.
    pub fn forward_on(&self, tape: &mut Tape<'_>, vars: &HeadVars, state: Var) -> Result<[Var; OBJECTIVES]> {
        let mut out = [state; OBJECTIVES];
        for (z, slot) in out.iter_mut().enumerate() {
            *slot = tape.affine(state, vars.vars[2 * z], vars.vars[2 * z + 1])?;
        }
        Ok(out)
    }

    pub fn forward_batch(&self, states: &DenseMatrix) -> Result<[DenseMatrix; OBJECTIVES]> {
        let q0 = states.affine(&self.params[0], &self.params[1])?;
        let q1 = states.affine(&self.params[2], &self.params[3])?;
        let q2 = states.affine(&self.params[4], &self.params[5])?;
        Ok([q0, q1, q2])
    }

    /// Q-values of all actions at a single state.
    pub fn q_forward(&self, state: &[f64]) -> Result<QMatrix> {
        let s = DenseMatrix::row_vector(state.to_vec());
        let cols = self.forward_batch(&s)?;
        let n = self.n_items();
        let mut values = DenseMatrix::zeros(n, OBJECTIVES);
        for (z, c) in cols.iter().enumerate() {
            for a in 0..n {
                values.set(a, z, c.get(0, a));
            }
        }
        QMatrix::new(values)
    }

    pub fn to_checkpoint(&self, prefix: &str, ck: &mut Checkpoint) {
        for (name, p) in HEAD_PARAM_NAMES.iter().zip(&self.params) {
            ck.push(format!("{prefix}{name}"), p.clone());
        }
    }

    pub fn from_checkpoint(prefix: &str, ck: &Checkpoint) -> Result<Self> {
        let p: Vec<DenseMatrix> = HEAD_PARAM_NAMES
            .iter()
            .map(|name| ck.get(&format!("{prefix}{name}")).cloned())
            .collect::<Result<_>>()?;
        let mut it = p.into_iter();
        let mut pair = || (it.next().expect("six tensors"), it.next().expect("six tensors"));
        SmorlHead::from_layers([pair(), pair(), pair()])
    }
}
