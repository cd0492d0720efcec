use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Epoch-wise shuffled mini-batches of example indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchStream {
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    epoch: u64,
}

impl BatchStream {
    pub fn new(n_examples: usize, batch_size: usize) -> Self {
        assert!(batch_size > 0, "batch size must be positive");
        BatchStream {
            order: (0..n_examples).collect(),
            cursor: 0,
            batch_size,
            epoch: 0,
        }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Next batch; the order is reshuffled with `rng` at every epoch start.
    /// The final batch of an epoch may be short.
    pub fn next_batch<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<usize> {
        if self.order.is_empty() {
            return Vec::new();
        }
        if self.cursor == 0 {
            self.order.shuffle(rng);
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = if end == self.order.len() {
            self.epoch += 1;
            0
        } else {
            end
        };
        batch
    }
}
