use std::cmp::Ordering;

use crate::error::{Result, SmorlError};

/// Top-k recommendation: item indices in `1..=n`, best first.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    pub items: Vec<usize>,
    pub scores: Vec<f64>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn top(&self) -> Option<usize> {
        self.items.first().copied()
    }
}

/// Higher score first, then lower column index.
#[inline]
fn rank_order(scores: &[f64], a: usize, b: usize) -> Ordering {
    scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// The `k` best-scoring items of a logits row whose column `j` is item `j + 1`.
pub fn top_k(scores: &[f64], k: usize) -> Result<RankedList> {
    let n = scores.len();
    if k == 0 || k > n {
        return Err(SmorlError::Range(format!("top_k: k = {k} outside 1..={n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    if k < n {
        idx.select_nth_unstable_by(k - 1, |&a, &b| rank_order(scores, a, b));
        idx.truncate(k);
    }
    idx.sort_unstable_by(|&a, &b| rank_order(scores, a, b));
    Ok(RankedList {
        scores: idx.iter().map(|&j| scores[j]).collect(),
        items: idx.into_iter().map(|j| j + 1).collect(),
    })
}

/// Item with the highest score, ties to the lowest index.
pub fn argmax_item(scores: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..scores.len() {
        if scores[j] > scores[best] {
            best = j;
        }
    }
    best + 1
}
