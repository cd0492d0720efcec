//! Seeded synthetic click logs with planted structure.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::preprocess::SessionDataset;

impl SessionDataset {
    /// Builds a dataset from raw item numbers, compacting them to a dense
    /// `1..=n` range in ascending order of the original numbers.
    pub fn from_indices(sessions: Vec<Vec<usize>>) -> Self {
        let max = sessions.iter().flatten().copied().max().unwrap_or(0);
        let mut used = vec![false; max + 1];
        for &i in sessions.iter().flatten() {
            used[i] = true;
        }
        let mut remap = vec![0usize; max + 1];
        let mut item_ids = Vec::new();
        for (raw, &u) in used.iter().enumerate() {
            if u {
                item_ids.push(format!("{raw:08}"));
                remap[raw] = item_ids.len();
            }
        }
        let session_ids = (0..sessions.len()).map(|i| format!("s{i:08}")).collect();
        let sessions = sessions
            .into_iter()
            .map(|s| s.into_iter().map(|i| remap[i]).collect())
            .collect();
        SessionDataset {
            session_ids,
            sessions,
            item_ids,
        }
    }
}

fn session_length<R: Rng>(rng: &mut R, min_len: usize, max_len: usize) -> usize {
    rng.gen_range(min_len..=max_len)
}

/// Every item `i` is always followed by `i mod n + 1`.
pub fn deterministic_successor(n_items: usize, n_sessions: usize, min_len: usize, max_len: usize, seed: u64) -> SessionDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sessions = (0..n_sessions)
        .map(|_| {
            let len = session_length(&mut rng, min_len, max_len);
            let mut item = rng.gen_range(1..=n_items);
            (0..len)
                .map(|_| {
                    let cur = item;
                    item = item % n_items + 1;
                    cur
                })
                .collect()
        })
        .collect();
    SessionDataset::from_indices(sessions)
}

/// Items `2k - 1` and `2k` form interchangeable pairs: a session walks a fixed
/// cycle over pairs and emits a uniformly chosen member of each.
pub fn paired_items(n_pairs: usize, n_sessions: usize, min_len: usize, max_len: usize, seed: u64) -> SessionDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cycle: Vec<usize> = (0..n_pairs).collect();
    use rand::seq::SliceRandom;
    cycle.shuffle(&mut rng);
    let mut next_pair = vec![0usize; n_pairs];
    for w in 0..n_pairs {
        next_pair[cycle[w]] = cycle[(w + 1) % n_pairs];
    }
    let sessions = (0..n_sessions)
        .map(|_| {
            let len = session_length(&mut rng, min_len, max_len);
            let mut pair = rng.gen_range(0..n_pairs);
            (0..len)
                .map(|_| {
                    let item = 2 * pair + 1 + rng.gen_range(0..2);
                    pair = next_pair[pair];
                    item
                })
                .collect()
        })
        .collect();
    SessionDataset::from_indices(sessions)
}

#[derive(Clone, Debug)]
pub struct ZipfPlantedConfig {
    pub n_items: usize,
    pub n_sessions: usize,
    pub zipf_exponent: f64,
    /// Planted successors per item.
    pub successors: usize,
    /// Probability of following a planted transition instead of a global draw.
    pub follow_prob: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for ZipfPlantedConfig {
    fn default() -> Self {
        ZipfPlantedConfig {
            n_items: 500,
            n_sessions: 20_000,
            zipf_exponent: 1.0,
            successors: 4,
            follow_prob: 0.8,
            min_len: 3,
            max_len: 10,
            seed: 0,
        }
    }
}

/// Zipf-distributed item popularity with per-item planted successor sets.
///
/// Session starts and off-plan clicks are Zipf draws. Each item owns
/// `successors` planted next items drawn half from the Zipf law and half
/// uniformly, so transitions mix popular and long-tail items.
pub fn zipf_planted(cfg: &ZipfPlantedConfig) -> SessionDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_items;
    let weights: Vec<f64> = (1..=n).map(|r| 1.0 / (r as f64).powf(cfg.zipf_exponent)).collect();
    let zipf = WeightedIndex::new(&weights).expect("positive weights");
    let planted: Vec<Vec<usize>> = (0..=n)
        .map(|_| {
            (0..cfg.successors)
                .map(|k| {
                    if k % 2 == 0 {
                        zipf.sample(&mut rng) + 1
                    } else {
                        rng.gen_range(1..=n)
                    }
                })
                .collect()
        })
        .collect();
    let sessions = (0..cfg.n_sessions)
        .map(|_| {
            let len = session_length(&mut rng, cfg.min_len, cfg.max_len);
            let mut item = zipf.sample(&mut rng) + 1;
            let mut s = Vec::with_capacity(len);
            s.push(item);
            while s.len() < len {
                item = if rng.gen::<f64>() < cfg.follow_prob {
                    let succ = &planted[item];
                    succ[rng.gen_range(0..succ.len())]
                } else {
                    zipf.sample(&mut rng) + 1
                };
                s.push(item);
            }
            s
        })
        .collect();
    SessionDataset::from_indices(sessions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn successor_rule_holds() {
        let ds = deterministic_successor(20, 50, 3, 8, 1);
        assert_eq!(ds.n_items(), 20);
        for s in &ds.sessions {
            for w in s.windows(2) {
                assert_eq!(w[1], w[0] % 20 + 1);
            }
        }
    }

    #[test]
    fn pairs_are_dense() {
        let ds = paired_items(10, 200, 3, 8, 2);
        assert_eq!(ds.n_items(), 20);
    }

    #[test]
    fn zipf_is_skewed() {
        let ds = zipf_planted(&ZipfPlantedConfig {
            n_sessions: 2000,
            ..Default::default()
        });
        let mut counts = vec![0usize; ds.n_items() + 1];
        for &i in ds.sessions.iter().flatten() {
            counts[i] += 1;
        }
        assert!(counts[1] > 10 * counts[ds.n_items()].max(1));
    }
}
