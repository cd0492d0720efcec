use super::preprocess::{SessionDataset, PAD};

/// Input sequence length used throughout training and evaluation.
pub const SEQ_LEN: usize = 10;

/// One `(x_{1:t}, a_t, x_{2:t+1})` transition from a logged session.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingExample {
    /// Index of the originating session in its dataset.
    pub session: usize,
    /// Position of the target within the session (1-based, so `t ≥ 1`).
    pub position: usize,
    pub prefix: Vec<usize>,
    pub target: usize,
    pub next_prefix: Vec<usize>,
}

impl TrainingExample {
    /// Last real item of the prefix.
    pub fn last_item(&self) -> usize {
        *self.prefix.last().expect("prefix is never empty")
    }
}

/// The last `min(len, seq_len)` items, left-padded with [`PAD`].
pub fn padded_window(items: &[usize], seq_len: usize) -> Vec<usize> {
    let take = items.len().min(seq_len);
    let mut out = vec![PAD; seq_len - take];
    out.extend_from_slice(&items[items.len() - take..]);
    out
}

pub fn session_examples(session_index: usize, session: &[usize], seq_len: usize) -> Vec<TrainingExample> {
    assert!(seq_len >= 1, "seq_len must be positive");
    (1..session.len())
        .map(|t| TrainingExample {
            session: session_index,
            position: t,
            prefix: padded_window(&session[..t], seq_len),
            target: session[t],
            next_prefix: padded_window(&session[..=t], seq_len),
        })
        .collect()
}

/// Every transition of the selected sessions, in session order.
pub fn make_examples_for(dataset: &SessionDataset, sessions: &[usize], seq_len: usize) -> Vec<TrainingExample> {
    sessions
        .iter()
        .flat_map(|&i| session_examples(i, &dataset.sessions[i], seq_len))
        .collect()
}

pub fn make_examples(dataset: &SessionDataset, seq_len: usize) -> Vec<TrainingExample> {
    let all: Vec<usize> = (0..dataset.n_sessions()).collect();
    make_examples_for(dataset, &all, seq_len)
}
