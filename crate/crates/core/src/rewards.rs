//! Per-step vector reward `[accuracy, diversity, novelty]`.
//!
//! Accuracy rewards the logged click; diversity and novelty score the
//! supervised head's top-1 prediction against the last clicked item and the
//! training-split popularity catalog.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{file_sha256, Checkpoint};
use crate::data::ItemCatalog;
use crate::error::{Result, SmorlError};
use crate::numerics::DenseMatrix;

pub const OBJECTIVES: usize = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardVector {
    pub accuracy: f64,
    pub diversity: f64,
    pub novelty: f64,
}

impl RewardVector {
    pub fn to_array(self) -> [f64; OBJECTIVES] {
        [self.accuracy, self.diversity, self.novelty]
    }

    pub fn in_bounds(&self) -> bool {
        self.accuracy == 1.0 && (0.0..=2.0).contains(&self.diversity) && (self.novelty == 0.0 || self.novelty == 1.0)
    }
}

/// Frozen item embedding used to score diversity. Never updated after
/// construction.
#[derive(Clone, Debug, PartialEq)]
pub struct DiversityEmbedding {
    table: DenseMatrix,
}

impl DiversityEmbedding {
    pub fn new(table: DenseMatrix) -> Self {
        DiversityEmbedding { table }
    }

    pub fn table(&self) -> &DenseMatrix {
        &self.table
    }

    /// Number of real items (rows minus the padding row).
    pub fn n_items(&self) -> usize {
        self.table.rows().saturating_sub(1)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<String> {
        let path = path.as_ref();
        let mut ck = Checkpoint::new(serde_json::json!({
            "kind": "diversity_embedding",
            "frozen": true,
            "n_items": self.n_items(),
        }));
        ck.push("e_div", self.table.clone());
        ck.save(path)?;
        file_sha256(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut ck = Checkpoint::load(path)?;
        if ck.meta_str("kind") != Some("diversity_embedding") {
            return Err(SmorlError::Format("checkpoint is not a diversity embedding".into()));
        }
        Ok(DiversityEmbedding::new(ck.take("e_div")?))
    }
}

pub fn accuracy_reward(_logged_item: usize) -> f64 {
    1.0
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(dot / (na * nb))
}

/// `1 - cos(e_last, e_pred)`, clamped to `[0, 2]`. A zero-norm row counts as
/// uncorrelated and yields 1.
pub fn diversity_reward(last_item: usize, predicted: usize, emb: &DiversityEmbedding) -> Result<f64> {
    let rows = emb.table.rows();
    for item in [last_item, predicted] {
        if item == 0 || item >= rows {
            return Err(SmorlError::Index {
                what: "diversity item",
                index: item,
                limit: rows,
            });
        }
    }
    if last_item == predicted {
        return Ok(0.0);
    }
    Ok(match cosine(emb.table.row(last_item), emb.table.row(predicted)) {
        Some(c) => (1.0 - c).clamp(0.0, 2.0),
        None => 1.0,
    })
}

/// 0 for items in the popular set, 1 for the long tail.
pub fn novelty_reward(predicted: usize, catalog: &ItemCatalog) -> Result<f64> {
    if predicted == 0 || predicted > catalog.n_items() {
        return Err(SmorlError::Index {
            what: "novelty item",
            index: predicted,
            limit: catalog.n_items() + 1,
        });
    }
    Ok(if catalog.is_popular(predicted) { 0.0 } else { 1.0 })
}

/// Stacks the three rewards in `[accuracy, diversity, novelty]` order.
///
/// Without a diversity embedding the diversity component is 0; callers must
/// only do that when the diversity weight is 0.
pub fn stack_rewards(
    logged_item: usize,
    last_item: usize,
    predicted: usize,
    emb: Option<&DiversityEmbedding>,
    catalog: &ItemCatalog,
) -> Result<RewardVector> {
    Ok(RewardVector {
        accuracy: accuracy_reward(logged_item),
        diversity: match emb {
            Some(e) => diversity_reward(last_item, predicted, e)?,
            None => 0.0,
        },
        novelty: novelty_reward(predicted, catalog)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(rows: &[Vec<f64>]) -> DiversityEmbedding {
        DiversityEmbedding::new(DenseMatrix::from_rows(rows).unwrap())
    }

    #[test]
    fn diversity_cases() {
        let e = emb(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0], vec![-3.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(diversity_reward(1, 1, &e).unwrap(), 0.0);
        assert!((diversity_reward(1, 2, &e).unwrap() - 1.0).abs() < 1e-15);
        assert!((diversity_reward(1, 3, &e).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(diversity_reward(1, 4, &e).unwrap(), 1.0);
        assert!(diversity_reward(0, 1, &e).is_err());
        assert!(diversity_reward(1, 5, &e).is_err());
    }

    #[test]
    fn novelty_cases() {
        let cat = ItemCatalog::from_counts(vec![0, 10, 5, 3, 2, 1, 1, 1, 1, 1, 1], 10.0);
        assert_eq!(novelty_reward(1, &cat).unwrap(), 0.0);
        assert_eq!(novelty_reward(10, &cat).unwrap(), 1.0);
        assert!(novelty_reward(11, &cat).is_err());
        let all = ItemCatalog::from_counts(vec![0, 10, 5, 3], 100.0);
        assert!((1..=3).all(|i| novelty_reward(i, &all).unwrap() == 0.0));
    }

    #[test]
    fn stacked_order() {
        let e = emb(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        let cat = ItemCatalog::from_counts(vec![0, 10, 1], 50.0);
        let r = stack_rewards(2, 1, 1, Some(&e), &cat).unwrap();
        assert_eq!(r.to_array(), [1.0, 0.0, 0.0]);
        let r = stack_rewards(1, 1, 2, Some(&e), &cat).unwrap();
        assert_eq!(r.to_array(), [1.0, 1.0, 1.0]);
        assert!(r.in_bounds());
    }
}
