//! Accuracy, coverage, repetitiveness and cumulative-reward metrics over a
//! held-out split. Recommendation lists always come from the supervised head.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::{make_examples_for, ItemCatalog, SessionDataset, TrainingExample, SEQ_LEN};
use crate::encoder::{top_k, EncoderModel};
use crate::error::{Result, SmorlError};
use crate::rewards::{diversity_reward, novelty_reward, DiversityEmbedding};

/// Cutoffs reported by [`evaluate`] and the CSV layout.
pub const REPORT_KS: [usize; 4] = [1, 5, 10, 20];

/// Cutoffs at which repetitiveness is reported.
pub const REPETITIVENESS_KS: [usize; 3] = [5, 10, 20];

const EVAL_CHUNK: usize = 1024;

fn check_inputs(ranked: &[Vec<usize>], targets: &[usize]) -> Result<()> {
    if ranked.is_empty() {
        return Err(SmorlError::UndefinedMetric("empty test set".into()));
    }
    if ranked.len() != targets.len() {
        return Err(SmorlError::Range(format!(
            "{} ranked lists for {} targets",
            ranked.len(),
            targets.len()
        )));
    }
    Ok(())
}

fn rank_of(list: &[usize], target: usize, k: usize) -> Option<usize> {
    list.iter().take(k).position(|&i| i == target).map(|p| p + 1)
}

/// Fraction of examples whose target is among the first `k` items.
pub fn hr_at_k(ranked: &[Vec<usize>], targets: &[usize], k: usize) -> Result<f64> {
    check_inputs(ranked, targets)?;
    let hits = ranked
        .iter()
        .zip(targets)
        .filter(|(l, &t)| rank_of(l, t, k).is_some())
        .count();
    Ok(hits as f64 / ranked.len() as f64)
}

/// Mean of `1 / log2(rank + 1)` over hits within the first `k`.
pub fn ndcg_at_k(ranked: &[Vec<usize>], targets: &[usize], k: usize) -> Result<f64> {
    check_inputs(ranked, targets)?;
    let sum: f64 = ranked
        .iter()
        .zip(targets)
        .filter_map(|(l, &t)| rank_of(l, t, k))
        .map(|r| 1.0 / ((r + 1) as f64).log2())
        .sum();
    Ok(sum / ranked.len() as f64)
}

/// `|⋃ top-k ∩ universe| / |universe|`.
pub fn coverage_at_k(ranked: &[Vec<usize>], universe: &[usize], k: usize) -> Result<f64> {
    let universe: HashSet<usize> = universe.iter().copied().collect();
    if universe.is_empty() {
        return Err(SmorlError::UndefinedMetric("coverage over an empty item universe".into()));
    }
    let covered: HashSet<usize> = ranked
        .iter()
        .flat_map(|l| l.iter().take(k))
        .copied()
        .filter(|i| universe.contains(i))
        .collect();
    Ok(covered.len() as f64 / universe.len() as f64)
}

/// Mean over sessions of (top-k slots recommended) − (distinct items among them).
pub fn repetitiveness_at_k(sessions: &[Vec<Vec<usize>>], k: usize) -> Result<f64> {
    if sessions.is_empty() {
        return Err(SmorlError::UndefinedMetric("repetitiveness over zero sessions".into()));
    }
    let total: usize = sessions
        .iter()
        .map(|lists| {
            let mut seen = HashSet::new();
            let mut slots = 0;
            for l in lists {
                for &i in l.iter().take(k) {
                    slots += 1;
                    seen.insert(i);
                }
            }
            slots - seen.len()
        })
        .sum();
    Ok(total as f64 / sessions.len() as f64)
}

/// Sums of the diversity and novelty rewards of each top-1 prediction,
/// given `(last clicked item, predicted item)` pairs.
pub fn cumulative_rewards(
    pairs: &[(usize, usize)],
    emb: Option<&DiversityEmbedding>,
    catalog: &ItemCatalog,
) -> Result<(Option<f64>, f64)> {
    let mut div = 0.0;
    let mut nov = 0.0;
    for &(last, pred) in pairs {
        if let Some(e) = emb {
            div += diversity_reward(last, pred, e)?;
        }
        nov += novelty_reward(pred, catalog)?;
    }
    Ok((emb.map(|_| div), nov))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffMetrics {
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
    pub cv_all: f64,
    pub cv_longtail: f64,
    pub repetitiveness: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cutoffs: Vec<CutoffMetrics>,
    /// Absent when no diversity embedding was supplied.
    pub cumulative_diversity_reward: Option<f64>,
    pub cumulative_novelty_reward: f64,
    pub n_examples: usize,
    pub n_sessions: usize,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl MetricsReport {
    pub fn at(&self, k: usize) -> Option<&CutoffMetrics> {
        self.cutoffs.iter().find(|c| c.k == k)
    }

    pub fn hr(&self, k: usize) -> Option<f64> {
        self.at(k).map(|c| c.hr)
    }

    pub fn ndcg(&self, k: usize) -> Option<f64> {
        self.at(k).map(|c| c.ndcg)
    }

    pub fn cv_all(&self, k: usize) -> Option<f64> {
        self.at(k).map(|c| c.cv_all)
    }

    pub fn cv_longtail(&self, k: usize) -> Option<f64> {
        self.at(k).map(|c| c.cv_longtail)
    }

    pub fn repetitiveness(&self, k: usize) -> Option<f64> {
        self.at(k).and_then(|c| c.repetitiveness)
    }

    /// Checks value ranges and monotonicity in `k`.
    pub fn check_invariants(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        for c in &self.cutoffs {
            if !(unit(c.hr) && unit(c.ndcg) && unit(c.cv_all) && unit(c.cv_longtail)) {
                return Err(SmorlError::Range(format!("metric outside [0, 1] at k = {}", c.k)));
            }
            if c.ndcg > c.hr {
                return Err(SmorlError::Range(format!("NDCG above HR at k = {}", c.k)));
            }
            if c.repetitiveness.is_some_and(|r| r < 0.0) {
                return Err(SmorlError::Range(format!("negative repetitiveness at k = {}", c.k)));
            }
        }
        for w in self.cutoffs.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.k < b.k && (a.hr > b.hr || a.ndcg > b.ndcg || a.cv_all > b.cv_all || a.cv_longtail > b.cv_longtail) {
                return Err(SmorlError::Range(format!("metrics decrease from k = {} to k = {}", a.k, b.k)));
            }
        }
        Ok(())
    }

    pub fn csv_header() -> Vec<String> {
        let mut h: Vec<String> = ["run_id", "fold", "step"].iter().map(|s| s.to_string()).collect();
        for k in REPORT_KS {
            h.push(format!("hr@{k}"));
            h.push(format!("ng@{k}"));
        }
        for k in REPORT_KS {
            h.push(format!("cv@{k}"));
        }
        for k in REPORT_KS {
            h.push(format!("cv_lt@{k}"));
        }
        for k in REPETITIVENESS_KS {
            h.push(format!("r@{k}"));
        }
        h.extend(
            ["cum_div", "cum_nov", "n_examples", "n_sessions"]
                .iter()
                .map(|s| s.to_string()),
        );
        h
    }

    /// One row in [`MetricsReport::csv_header`] order; missing cutoffs are blank.
    pub fn csv_row(&self, run_id: &str, fold: &str, step: &str) -> Vec<String> {
        let mut r = vec![run_id.to_string(), fold.to_string(), step.to_string()];
        for k in REPORT_KS {
            r.push(fmt_opt(self.hr(k)));
            r.push(fmt_opt(self.ndcg(k)));
        }
        for k in REPORT_KS {
            r.push(fmt_opt(self.cv_all(k)));
        }
        for k in REPORT_KS {
            r.push(fmt_opt(self.cv_longtail(k)));
        }
        for k in REPETITIVENESS_KS {
            r.push(fmt_opt(self.repetitiveness(k)));
        }
        r.push(fmt_opt(self.cumulative_diversity_reward));
        r.push(format!("{}", self.cumulative_novelty_reward));
        r.push(self.n_examples.to_string());
        r.push(self.n_sessions.to_string());
        r
    }

    /// Field-wise mean of reports sharing the same cutoffs.
    pub fn mean(reports: &[MetricsReport]) -> Result<MetricsReport> {
        let first = reports
            .first()
            .ok_or_else(|| SmorlError::UndefinedMetric("mean of zero reports".into()))?;
        let n = reports.len() as f64;
        let avg = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let avg_opt = |f: &dyn Fn(&MetricsReport) -> Option<f64>| {
            reports.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n)
        };
        let mut cutoffs = Vec::with_capacity(first.cutoffs.len());
        for c in &first.cutoffs {
            let k = c.k;
            if reports.iter().any(|r| r.at(k).is_none()) {
                return Err(SmorlError::Range(format!("reports disagree on cutoff {k}")));
            }
            cutoffs.push(CutoffMetrics {
                k,
                hr: avg(&|r| r.hr(k).unwrap_or(0.0)),
                ndcg: avg(&|r| r.ndcg(k).unwrap_or(0.0)),
                cv_all: avg(&|r| r.cv_all(k).unwrap_or(0.0)),
                cv_longtail: avg(&|r| r.cv_longtail(k).unwrap_or(0.0)),
                repetitiveness: avg_opt(&|r| r.repetitiveness(k)),
            });
        }
        Ok(MetricsReport {
            cutoffs,
            cumulative_diversity_reward: avg_opt(&|r| r.cumulative_diversity_reward),
            cumulative_novelty_reward: avg(&|r| r.cumulative_novelty_reward),
            n_examples: (reports.iter().map(|r| r.n_examples).sum::<usize>() as f64 / n).round() as usize,
            n_sessions: (reports.iter().map(|r| r.n_sessions).sum::<usize>() as f64 / n).round() as usize,
        })
    }
}

/// Ranked lists per example plus the session grouping used for repetitiveness.
#[derive(Clone, Debug, PartialEq)]
pub struct Recommendations {
    pub lists: Vec<Vec<usize>>,
    pub targets: Vec<usize>,
    pub last_items: Vec<usize>,
    /// Example ranges `[start, end)` of each session, in input order.
    pub session_ranges: Vec<(usize, usize)>,
}

impl Recommendations {
    pub fn by_session(&self) -> Vec<Vec<Vec<usize>>> {
        self.session_ranges
            .iter()
            .map(|&(a, b)| self.lists[a..b].to_vec())
            .collect()
    }
}

/// Top-`k` lists of the supervised head for every example of `sessions`.
pub fn recommend(model: &EncoderModel, dataset: &SessionDataset, sessions: &[usize], k: usize) -> Result<Recommendations> {
    let examples = make_examples_for(dataset, sessions, SEQ_LEN);
    let mut session_ranges = Vec::new();
    let mut start = 0;
    for (i, ex) in examples.iter().enumerate() {
        if i > 0 && ex.session != examples[i - 1].session {
            session_ranges.push((start, i));
            start = i;
        }
    }
    if !examples.is_empty() {
        session_ranges.push((start, examples.len()));
    }
    let mut lists = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(EVAL_CHUNK) {
        let prefixes: Vec<&[usize]> = chunk.iter().map(|e| e.prefix.as_slice()).collect();
        let states = model.encode_batch(&prefixes)?;
        let logits = model.decode_logits(&states)?;
        for r in 0..chunk.len() {
            lists.push(top_k(logits.row(r), k)?.items);
        }
    }
    Ok(Recommendations {
        lists,
        targets: examples.iter().map(|e| e.target).collect(),
        last_items: examples.iter().map(TrainingExample::last_item).collect(),
        session_ranges,
    })
}

/// Metrics of precomputed recommendations at each cutoff in `ks`.
pub fn report_from(
    recs: &Recommendations,
    catalog: &ItemCatalog,
    emb: Option<&DiversityEmbedding>,
    ks: &[usize],
) -> Result<MetricsReport> {
    let all_items: Vec<usize> = (1..=catalog.n_items()).collect();
    let long_tail = catalog.long_tail_items();
    let by_session = recs.by_session();
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut cutoffs = Vec::with_capacity(ks.len());
    for &k in &ks {
        cutoffs.push(CutoffMetrics {
            k,
            hr: hr_at_k(&recs.lists, &recs.targets, k)?,
            ndcg: ndcg_at_k(&recs.lists, &recs.targets, k)?,
            cv_all: coverage_at_k(&recs.lists, &all_items, k)?,
            cv_longtail: coverage_at_k(&recs.lists, &long_tail, k)?,
            repetitiveness: if REPETITIVENESS_KS.contains(&k) {
                Some(repetitiveness_at_k(&by_session, k)?)
            } else {
                None
            },
        });
    }
    let pairs: Vec<(usize, usize)> = recs
        .last_items
        .iter()
        .zip(&recs.lists)
        .map(|(&l, list)| (l, list[0]))
        .collect();
    let (div, nov) = cumulative_rewards(&pairs, emb, catalog)?;
    Ok(MetricsReport {
        cutoffs,
        cumulative_diversity_reward: div,
        cumulative_novelty_reward: nov,
        n_examples: recs.lists.len(),
        n_sessions: recs.session_ranges.len(),
    })
}

/// Scores the supervised head of `model` on every example of `sessions`.
pub fn evaluate(
    model: &EncoderModel,
    dataset: &SessionDataset,
    sessions: &[usize],
    catalog: &ItemCatalog,
    emb: Option<&DiversityEmbedding>,
    ks: &[usize],
) -> Result<MetricsReport> {
    let max_k = ks
        .iter()
        .copied()
        .max()
        .ok_or_else(|| SmorlError::Config("no cutoffs requested".into()))?;
    let recs = recommend(model, dataset, sessions, max_k.min(model.n_items()))?;
    report_from(&recs, catalog, emb, ks)
}
