use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::events::{EventLog, EventRecord, EventType};
use crate::error::{Result, SmorlError};

/// Padding item index; real items occupy `1..=n`.
pub const PAD: usize = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessRules {
    /// Event types kept and treated as clicks.
    pub keep_events: Vec<EventType>,
    /// Items with strictly fewer interactions are removed.
    pub min_item_frequency: Option<usize>,
    pub min_session_length: usize,
    /// Keep at most this many sessions, chosen by seeded permutation.
    pub subsample: Option<usize>,
    pub subsample_seed: u64,
}

impl Default for PreprocessRules {
    fn default() -> Self {
        PreprocessRules {
            keep_events: vec![EventType::Click],
            min_item_frequency: None,
            min_session_length: 3,
            subsample: None,
            subsample_seed: 0,
        }
    }
}

impl PreprocessRules {
    pub fn rc15() -> Self {
        PreprocessRules {
            subsample: Some(200_000),
            ..PreprocessRules::default()
        }
    }

    pub fn retailrocket() -> Self {
        PreprocessRules {
            keep_events: vec![EventType::View],
            min_item_frequency: Some(3),
            ..PreprocessRules::default()
        }
    }
}

/// Click sequences over a dense item index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionDataset {
    pub session_ids: Vec<String>,
    /// Item indices in `1..=n`, in click order.
    pub sessions: Vec<Vec<usize>>,
    /// `item_ids[i - 1]` is the raw id of item index `i`.
    pub item_ids: Vec<String>,
}

impl SessionDataset {
    /// Builds a dataset from raw sessions, assigning dense indices by sorted item id.
    pub fn from_raw(raw: Vec<(String, Vec<String>)>) -> Result<Self> {
        if raw.is_empty() {
            return Err(SmorlError::EmptyDataset);
        }
        let vocab: BTreeSet<&str> = raw.iter().flat_map(|(_, s)| s.iter().map(String::as_str)).collect();
        let item_ids: Vec<String> = vocab.into_iter().map(str::to_string).collect();
        let index: HashMap<&str, usize> = item_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i + 1))
            .collect();
        let mut session_ids = Vec::with_capacity(raw.len());
        let mut sessions = Vec::with_capacity(raw.len());
        for (sid, items) in &raw {
            session_ids.push(sid.clone());
            sessions.push(items.iter().map(|it| index[it.as_str()]).collect());
        }
        Ok(SessionDataset {
            session_ids,
            sessions,
            item_ids,
        })
    }

    /// Item count `n`.
    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_sessions(&self) -> usize {
        self.sessions.len()
    }

    pub fn n_clicks(&self) -> usize {
        self.sessions.iter().map(Vec::len).sum()
    }

    /// Re-expresses the dataset as a click log with positional timestamps.
    pub fn to_event_log(&self) -> EventLog {
        let mut records = Vec::with_capacity(self.n_clicks());
        for (sid, s) in self.session_ids.iter().zip(&self.sessions) {
            for (t, &item) in s.iter().enumerate() {
                records.push(EventRecord {
                    session_id: sid.clone(),
                    timestamp: t as i64,
                    item_id: self.item_ids[item - 1].clone(),
                    event_type: EventType::Click,
                });
            }
        }
        EventLog { records, malformed: 0 }
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            sequences: self.n_sessions(),
            items: self.n_items(),
            clicks: self.n_clicks(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub sequences: usize,
    pub items: usize,
    pub clicks: usize,
}

/// Applies event mapping, item-frequency filtering, session-length filtering
/// and subsampling, in that order.
///
/// The frequency and length filters are repeated until neither removes
/// anything, since dropping short sessions can push item counts back under the
/// threshold.
pub fn preprocess(log: &EventLog, rules: &PreprocessRules) -> Result<SessionDataset> {
    let keep: BTreeSet<EventType> = rules.keep_events.iter().copied().collect();

    let mut order: Vec<&str> = Vec::new();
    let mut grouped: HashMap<&str, Vec<(i64, usize, &str)>> = HashMap::new();
    for (pos, rec) in log.records.iter().enumerate() {
        if !keep.contains(&rec.event_type) {
            continue;
        }
        let entry = grouped.entry(rec.session_id.as_str()).or_insert_with(|| {
            order.push(rec.session_id.as_str());
            Vec::new()
        });
        entry.push((rec.timestamp, pos, rec.item_id.as_str()));
    }
    let mut sessions: Vec<(&str, Vec<&str>)> = order
        .into_iter()
        .map(|sid| {
            let mut evs = grouped.remove(sid).unwrap_or_default();
            evs.sort_by_key(|&(ts, pos, _)| (ts, pos));
            (sid, evs.into_iter().map(|(_, _, item)| item).collect())
        })
        .collect();

    loop {
        let before: usize = sessions.iter().map(|(_, s)| s.len()).sum::<usize>() + sessions.len();
        if let Some(min_freq) = rules.min_item_frequency {
            let mut counts: HashMap<&str, usize> = HashMap::new();
            for (_, s) in &sessions {
                for it in s {
                    *counts.entry(*it).or_default() += 1;
                }
            }
            for (_, s) in sessions.iter_mut() {
                s.retain(|it| counts[it] >= min_freq);
            }
        }
        sessions.retain(|(_, s)| s.len() >= rules.min_session_length.max(2));
        let after: usize = sessions.iter().map(|(_, s)| s.len()).sum::<usize>() + sessions.len();
        if after == before || rules.min_item_frequency.is_none() {
            break;
        }
    }

    if let Some(target) = rules.subsample {
        if sessions.len() > target {
            let mut idx: Vec<usize> = (0..sessions.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(rules.subsample_seed));
            let mut chosen: Vec<usize> = idx.into_iter().take(target).collect();
            chosen.sort_unstable();
            let mut keep_mask = vec![false; sessions.len()];
            for i in chosen {
                keep_mask[i] = true;
            }
            let mut i = 0;
            sessions.retain(|_| {
                let k = keep_mask[i];
                i += 1;
                k
            });
        }
    }

    if sessions.is_empty() {
        return Err(SmorlError::EmptyDataset);
    }
    SessionDataset::from_raw(
        sessions
            .into_iter()
            .map(|(sid, s)| (sid.to_string(), s.into_iter().map(str::to_string).collect()))
            .collect(),
    )
}

/// Interaction count per raw item id.
pub fn item_counts(log: &EventLog) -> BTreeMap<&str, usize> {
    let mut counts = BTreeMap::new();
    for r in &log.records {
        *counts.entry(r.item_id.as_str()).or_default() += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_of(sessions: &[(&str, &[&str])]) -> EventLog {
        let mut records = Vec::new();
        let mut ts = 0;
        for (sid, items) in sessions {
            for it in *items {
                ts += 1;
                records.push(EventRecord {
                    session_id: sid.to_string(),
                    timestamp: ts,
                    item_id: it.to_string(),
                    event_type: EventType::Click,
                });
            }
        }
        EventLog { records, malformed: 0 }
    }

    #[test]
    fn length_filter() {
        let log = log_of(&[("s1", &["a", "b", "c"]), ("s2", &["a", "b"])]);
        let ds = preprocess(&log, &PreprocessRules::default()).unwrap();
        assert_eq!(ds.n_sessions(), 1);
        assert_eq!(ds.sessions[0], vec![1, 2, 3]);
    }

    #[test]
    fn frequency_filter_runs_before_length_filter() {
        // a: 5 events, b: 2 events; dropping b shortens s2 below 3.
        let log = log_of(&[
            ("s1", &["a", "a", "a"]),
            ("s2", &["a", "b", "a"]),
            ("s3", &["b", "c", "c", "c"]),
        ]);
        let rules = PreprocessRules {
            min_item_frequency: Some(3),
            ..PreprocessRules::default()
        };
        let ds = preprocess(&log, &rules).unwrap();
        assert!(ds.item_ids.iter().all(|id| id != "b"));
        assert_eq!(ds.n_sessions(), 2);
        assert_eq!(ds.sessions[1], vec![2, 2, 2]);
    }

    #[test]
    fn event_mapping_keeps_only_listed_types() {
        let mut log = log_of(&[("s1", &["a", "b", "c", "d"])]);
        log.records[3].event_type = EventType::Purchase;
        let ds = preprocess(&log, &PreprocessRules::default()).unwrap();
        assert_eq!(ds.n_clicks(), 3);
    }

    #[test]
    fn timestamp_sort_with_stable_ties() {
        let mut log = log_of(&[("s1", &["a", "b", "c", "d"])]);
        log.records[0].timestamp = 10;
        log.records[1].timestamp = 5;
        log.records[2].timestamp = 5;
        log.records[3].timestamp = 1;
        let ds = preprocess(&log, &PreprocessRules::default()).unwrap();
        let ids: Vec<&str> = ds.sessions[0].iter().map(|&i| ds.item_ids[i - 1].as_str()).collect();
        assert_eq!(ids, ["d", "b", "c", "a"]);
    }

    #[test]
    fn empty_result_is_error() {
        let log = log_of(&[("s1", &["a", "b"])]);
        assert!(matches!(
            preprocess(&log, &PreprocessRules::default()),
            Err(SmorlError::EmptyDataset)
        ));
    }

    #[test]
    fn subsample_is_seeded_and_order_preserving() {
        let sessions: Vec<(String, Vec<&str>)> =
            (0..50).map(|i| (format!("s{i:02}"), vec!["a", "b", "c"])).collect();
        let refs: Vec<(&str, &[&str])> = sessions.iter().map(|(s, v)| (s.as_str(), v.as_slice())).collect();
        let log = log_of(&refs);
        let rules = PreprocessRules {
            subsample: Some(10),
            subsample_seed: 9,
            ..PreprocessRules::default()
        };
        let a = preprocess(&log, &rules).unwrap();
        let b = preprocess(&log, &rules).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_sessions(), 10);
        let mut sorted = a.session_ids.clone();
        sorted.sort();
        assert_eq!(sorted, a.session_ids);
    }
}
