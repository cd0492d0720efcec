use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmorlError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSet {
    pub folds: Vec<Fold>,
    pub ratio: (usize, usize, usize),
    pub seed: u64,
}

/// Seeded session-level cross-validation split.
///
/// Sessions are permuted once; fold `k` rotates the permutation by `k` times
/// the validation-plus-test share, then takes validation, test and train in
/// that order. With ratio 8:1:1 and five folds the test blocks tile the data.
pub fn split(n_sessions: usize, ratio: (usize, usize, usize), folds: usize, seed: u64) -> Result<SplitSet> {
    if folds == 0 {
        return Err(SmorlError::Split {
            sessions: n_sessions,
            reason: "fold count must be at least 1".into(),
        });
    }
    let total = ratio.0 + ratio.1 + ratio.2;
    if total == 0 || ratio.0 == 0 {
        return Err(SmorlError::Split {
            sessions: n_sessions,
            reason: format!("invalid ratio {ratio:?}"),
        });
    }
    if n_sessions < 10 {
        return Err(SmorlError::Split {
            sessions: n_sessions,
            reason: "need at least 10 sessions".into(),
        });
    }
    let mut perm: Vec<usize> = (0..n_sessions).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n_val = n_sessions * ratio.1 / total;
    let n_test = n_sessions * ratio.2 / total;
    let stride = n_sessions * (ratio.1 + ratio.2) / total;
    let folds = (0..folds)
        .map(|k| {
            let offset = (k * stride) % n_sessions;
            let mut rotated = perm.clone();
            rotated.rotate_left(offset);
            let validation = rotated[..n_val].to_vec();
            let test = rotated[n_val..n_val + n_test].to_vec();
            let train = rotated[n_val + n_test..].to_vec();
            Fold { train, validation, test }
        })
        .collect();
    Ok(SplitSet {
        folds,
        ratio,
        seed,
    })
}
