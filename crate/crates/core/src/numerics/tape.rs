//! Reverse-mode differentiation over [`DenseMatrix`] values.
//!
//! Operations are appended to a linear tape during the forward pass, with
//! every activation the backward pass needs kept on the node. Trainable
//! parameters enter through [`Tape::param`] under a caller-chosen slot id and
//! their gradients come back keyed by that slot. Anything registered with
//! [`Tape::constant`] or [`Tape::constant_ref`] (frozen weights, inputs,
//! bootstrap values) never receives a gradient.

use std::borrow::Cow;
use std::collections::BTreeMap;

use super::matrix::{gemm, DenseMatrix};
use crate::error::{Result, SmorlError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(usize),
    MatMul(usize, usize),
    AddBias(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    OneMinus(usize),
    Sigmoid(usize),
    Tanh(usize),
    Gather { table: usize, indices: Vec<usize> },
    PickPerRow { input: usize, cols: Vec<usize> },
    SoftmaxXent { logits: usize, targets: Vec<usize>, probs: DenseMatrix },
    MeanSquare(usize),
}

struct Node<'p> {
    value: Cow<'p, DenseMatrix>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

/// Gradients of a scalar loss with respect to every registered parameter slot.
#[derive(Debug, Default)]
pub struct Gradients {
    by_slot: BTreeMap<usize, DenseMatrix>,
}

impl Gradients {
    pub fn get(&self, slot: usize) -> Option<&DenseMatrix> {
        self.by_slot.get(&slot)
    }

    pub fn take(&mut self, slot: usize) -> Option<DenseMatrix> {
        self.by_slot.remove(&slot)
    }

    pub fn slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.by_slot.keys().copied()
    }

    pub fn is_finite(&self) -> bool {
        self.by_slot.values().all(DenseMatrix::is_finite)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax cross-entropy with max subtraction. Returns the mean loss
/// over rows and the softmax probabilities.
pub fn softmax_xent_rows(logits: &DenseMatrix, targets: &[usize]) -> Result<(f64, DenseMatrix)> {
    if targets.len() != logits.rows() {
        return Err(SmorlError::Dimension {
            op: "softmax_cross_entropy",
            left: logits.shape(),
            right: (targets.len(), 1),
        });
    }
    let mut probs = DenseMatrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        if t >= logits.cols() {
            return Err(SmorlError::Index {
                what: "softmax target",
                index: t,
                limit: logits.cols(),
            });
        }
        let row = logits.row(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let out = probs.row_mut(r);
        let mut sum = 0.0;
        for (o, &v) in out.iter_mut().zip(row) {
            *o = (v - max).exp();
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
        total += sum.ln() - (row[t] - max);
    }
    let n = targets.len().max(1) as f64;
    Ok((total / n, probs))
}

/// Single-vector softmax cross-entropy: `(loss, softmax - onehot(target))`.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    let m = DenseMatrix::row_vector(logits.to_vec());
    let (loss, probs) = softmax_xent_rows(&m, &[target])?;
    let mut grad = probs.into_values();
    grad[target] -= 1.0;
    Ok((loss, grad))
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'p, DenseMatrix>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.values()[0]
    }

    pub fn constant(&mut self, m: DenseMatrix) -> Var {
        self.push(Cow::Owned(m), Op::Constant, false)
    }

    pub fn constant_ref(&mut self, m: &'p DenseMatrix) -> Var {
        self.push(Cow::Borrowed(m), Op::Constant, false)
    }

    /// Registers a trainable parameter under `slot`.
    pub fn param(&mut self, slot: usize, m: &'p DenseMatrix) -> Var {
        self.push(Cow::Borrowed(m), Op::Param(slot), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Cow::Owned(out), Op::MatMul(a.0, b.0), rg))
    }

    /// Adds a `1 × n` bias row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(SmorlError::Dimension {
                op: "add_bias",
                left: av.shape(),
                right: bv.shape(),
            });
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.values()) {
                *o += b;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(Cow::Owned(out), Op::AddBias(a.0, bias.0), rg))
    }

    /// `x · W + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    fn zip_with(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<DenseMatrix> {
        let (av, bv) = (self.value(a), self.value(b));
        av.same_shape(bv, op)?;
        let values = av.values().iter().zip(bv.values()).map(|(&x, &y)| f(x, y)).collect();
        DenseMatrix::from_vec(av.rows(), av.cols(), values)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Cow::Owned(out), Op::Add(a.0, b.0), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Cow::Owned(out), Op::Sub(a.0, b.0), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Cow::Owned(out), Op::Mul(a.0, b.0), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v * c);
        let rg = self.rg(a);
        self.push(Cow::Owned(out), Op::Scale(a.0, c), rg)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| 1.0 - v);
        let rg = self.rg(a);
        self.push(Cow::Owned(out), Op::OneMinus(a.0), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(Cow::Owned(out), Op::Sigmoid(a.0), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(Cow::Owned(out), Op::Tanh(a.0), rg)
    }

    /// Row lookup: output row `i` is `table[indices[i]]`.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let mut out = DenseMatrix::zeros(indices.len(), t.cols());
        for (i, &idx) in indices.iter().enumerate() {
            if idx >= t.rows() {
                return Err(SmorlError::Index {
                    what: "embedding row",
                    index: idx,
                    limit: t.rows(),
                });
            }
            out.row_mut(i).copy_from_slice(t.row(idx));
        }
        let rg = self.rg(table);
        Ok(self.push(
            Cow::Owned(out),
            Op::Gather {
                table: table.0,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    /// Output is `rows × 1` with entry `i` equal to `input[i, cols[i]]`.
    pub fn pick_per_row(&mut self, input: Var, cols: &[usize]) -> Result<Var> {
        let x = self.value(input);
        if cols.len() != x.rows() {
            return Err(SmorlError::Dimension {
                op: "pick_per_row",
                left: x.shape(),
                right: (cols.len(), 1),
            });
        }
        let mut out = DenseMatrix::zeros(cols.len(), 1);
        for (i, &c) in cols.iter().enumerate() {
            if c >= x.cols() {
                return Err(SmorlError::Index {
                    what: "picked column",
                    index: c,
                    limit: x.cols(),
                });
            }
            out.set(i, 0, x.get(i, c));
        }
        let rg = self.rg(input);
        Ok(self.push(
            Cow::Owned(out),
            Op::PickPerRow {
                input: input.0,
                cols: cols.to_vec(),
            },
            rg,
        ))
    }

    /// Mean over rows of the softmax cross-entropy against `targets`.
    pub fn softmax_xent(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (loss, probs) = softmax_xent_rows(self.value(logits), targets)?;
        let rg = self.rg(logits);
        Ok(self.push(
            Cow::Owned(DenseMatrix::row_vector(vec![loss])),
            Op::SoftmaxXent {
                logits: logits.0,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Mean of squared entries, as a `1 × 1` value.
    pub fn mean_square(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let n = v.len().max(1) as f64;
        let s = v.values().iter().map(|x| x * x).sum::<f64>() / n;
        let rg = self.rg(a);
        self.push(Cow::Owned(DenseMatrix::row_vector(vec![s])), Op::MeanSquare(a.0), rg)
    }

    /// Reverse pass from a `1 × 1` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(SmorlError::Dimension {
                op: "backward",
                left: lv.shape(),
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<DenseMatrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(DenseMatrix::filled(1, 1, 1.0));
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(slot) => match out.by_slot.get_mut(slot) {
                    Some(acc) => acc.add_assign(&g),
                    None => {
                        out.by_slot.insert(*slot, g);
                    }
                },
                Op::MatMul(a, b) => {
                    if self.nodes[*a].requires_grad {
                        let bv = &self.nodes[*b].value;
                        let mut da = DenseMatrix::zeros(g.rows(), bv.rows());
                        gemm(&g, false, bv, true, &mut da, 0.0);
                        accumulate(&mut grads, *a, da);
                    }
                    if self.nodes[*b].requires_grad {
                        let av = &self.nodes[*a].value;
                        let mut db = DenseMatrix::zeros(av.cols(), g.cols());
                        gemm(av, true, &g, false, &mut db, 0.0);
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::AddBias(a, b) => {
                    if self.nodes[*b].requires_grad {
                        let mut db = DenseMatrix::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (d, v) in db.values_mut().iter_mut().zip(g.row(r)) {
                                *d += v;
                            }
                        }
                        accumulate(&mut grads, *b, db);
                    }
                    if self.nodes[*a].requires_grad {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.nodes[*b].requires_grad {
                        accumulate(&mut grads, *b, g.clone());
                    }
                    if self.nodes[*a].requires_grad {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.nodes[*b].requires_grad {
                        accumulate(&mut grads, *b, g.map(|v| -v));
                    }
                    if self.nodes[*a].requires_grad {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.nodes[*a].requires_grad {
                        let d = hadamard(&g, &self.nodes[*b].value);
                        accumulate(&mut grads, *a, d);
                    }
                    if self.nodes[*b].requires_grad {
                        let d = hadamard(&g, &self.nodes[*a].value);
                        accumulate(&mut grads, *b, d);
                    }
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut grads, *a, g.map(|v| v * c));
                }
                Op::OneMinus(a) => accumulate(&mut grads, *a, g.map(|v| -v)),
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let d = zip_map(&g, y, |gv, yv| gv * yv * (1.0 - yv));
                    accumulate(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let d = zip_map(&g, y, |gv, yv| gv * (1.0 - yv * yv));
                    accumulate(&mut grads, *a, d);
                }
                Op::Gather { table, indices } => {
                    let t = &self.nodes[*table].value;
                    let mut d = DenseMatrix::zeros(t.rows(), t.cols());
                    for (r, &idx) in indices.iter().enumerate() {
                        for (dv, gv) in d.row_mut(idx).iter_mut().zip(g.row(r)) {
                            *dv += gv;
                        }
                    }
                    accumulate(&mut grads, *table, d);
                }
                Op::PickPerRow { input, cols } => {
                    let x = &self.nodes[*input].value;
                    let mut d = DenseMatrix::zeros(x.rows(), x.cols());
                    for (r, &c) in cols.iter().enumerate() {
                        d.set(r, c, g.get(r, 0));
                    }
                    accumulate(&mut grads, *input, d);
                }
                Op::SoftmaxXent {
                    logits,
                    targets,
                    probs,
                } => {
                    let scale = g.get(0, 0) / targets.len().max(1) as f64;
                    let mut d = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        let row = d.row_mut(r);
                        row[t] -= 1.0;
                        for v in row.iter_mut() {
                            *v *= scale;
                        }
                    }
                    accumulate(&mut grads, *logits, d);
                }
                Op::MeanSquare(a) => {
                    let x = &self.nodes[*a].value;
                    let c = 2.0 * g.get(0, 0) / x.len().max(1) as f64;
                    accumulate(&mut grads, *a, x.map(|v| c * v));
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<DenseMatrix>], idx: usize, g: DenseMatrix) {
    match &mut grads[idx] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &DenseMatrix, b: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> DenseMatrix {
    let values = a.values().iter().zip(b.values()).map(|(&x, &y)| f(x, y)).collect();
    DenseMatrix::from_vec(a.rows(), a.cols(), values).expect("shapes checked on forward")
}

fn hadamard(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    zip_map(a, b, |x, y| x * y)
}
