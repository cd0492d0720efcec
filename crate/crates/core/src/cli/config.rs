use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{EventType, FormatDescriptor, PreprocessRules, SEQ_LEN};
use crate::encoder::PretrainConfig;
use crate::error::{Result, SmorlError};
use crate::smorl::{Objective, TrainConfig};

/// Every run setting, as flat JSON keys. Absent keys take their defaults;
/// nullable column and preprocessing keys fall back to the `format` preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Raw event file read by `prepare`.
    pub raw_path: Option<PathBuf>,
    /// `rc15`, `retailrocket` or `custom` (all three columns required).
    pub format: String,
    pub delimiter: Option<char>,
    pub has_header: Option<bool>,
    pub session_col: Option<usize>,
    pub timestamp_col: Option<usize>,
    pub item_col: Option<usize>,
    pub event_col: Option<usize>,
    pub max_malformed_fraction: f64,

    pub keep_events: Option<Vec<EventType>>,
    pub min_item_frequency: Option<usize>,
    pub min_session_length: Option<usize>,
    pub subsample: Option<usize>,

    /// Directory written by `prepare`.
    pub dataset: Option<PathBuf>,
    /// Frozen diversity embedding written by `pretrain-embedding`.
    pub embedding: Option<PathBuf>,

    pub seq_len: usize,
    pub folds: usize,
    pub split_ratio: [usize; 3],
    pub fold: usize,
    pub x_percent: f64,

    pub batch_size: usize,
    pub learning_rate: f64,
    pub embed_size: usize,
    pub hidden_size: usize,
    pub weights: [f64; 3],
    pub gamma: f64,
    pub alpha: f64,
    pub max_steps: u64,
    pub eval_every: u64,
    pub pretrain_steps: u64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let obj = Objective::default();
        RunConfig {
            raw_path: None,
            format: "rc15".into(),
            delimiter: None,
            has_header: None,
            session_col: None,
            timestamp_col: None,
            item_col: None,
            event_col: None,
            max_malformed_fraction: 0.01,
            keep_events: None,
            min_item_frequency: None,
            min_session_length: None,
            subsample: None,
            dataset: None,
            embedding: None,
            seq_len: SEQ_LEN,
            folds: 5,
            split_ratio: [8, 1, 1],
            fold: 0,
            x_percent: 10.0,
            batch_size: 256,
            learning_rate: 0.01,
            embed_size: 64,
            hidden_size: 64,
            weights: obj.weights,
            gamma: obj.gamma,
            alpha: obj.alpha,
            max_steps: 20_000,
            eval_every: 5_000,
            pretrain_steps: 5_000,
            seed: 0,
            out_dir: PathBuf::from("runs"),
        }
    }
}

fn parse_override(item: &str) -> Result<(String, serde_json::Value)> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| SmorlError::Config(format!("override {item:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

impl RunConfig {
    /// Defaults, then the JSON file, then `key=value` overrides (values parsed
    /// as JSON, falling back to a string).
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut obj = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| SmorlError::io(p, e))?;
                match serde_json::from_str::<serde_json::Value>(&text) {
                    Ok(serde_json::Value::Object(m)) => m,
                    Ok(_) => return Err(SmorlError::Config(format!("{} is not a JSON object", p.display()))),
                    Err(e) => return Err(SmorlError::Config(format!("{}: {e}", p.display()))),
                }
            }
            None => serde_json::Map::new(),
        };
        for item in overrides {
            let (k, v) = parse_override(item)?;
            obj.insert(k, v);
        }
        let cfg: RunConfig =
            serde_json::from_value(serde_json::Value::Object(obj)).map_err(|e| SmorlError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len != SEQ_LEN {
            return Err(SmorlError::Config(format!("seq_len must be {SEQ_LEN}")));
        }
        if self.folds == 0 || self.fold >= self.folds {
            return Err(SmorlError::Config(format!("fold {} outside 0..{}", self.fold, self.folds)));
        }
        if !(self.x_percent > 0.0 && self.x_percent <= 100.0) {
            return Err(SmorlError::Config(format!("x_percent {} outside (0, 100]", self.x_percent)));
        }
        self.train_config().validate()?;
        self.format_descriptor()?;
        Ok(())
    }

    pub fn format_descriptor(&self) -> Result<FormatDescriptor> {
        let mut fmt = match self.format.as_str() {
            "rc15" => FormatDescriptor::rc15(),
            "retailrocket" => FormatDescriptor::retailrocket(),
            "custom" => {
                let missing: Vec<&str> = [
                    ("session_col", self.session_col),
                    ("timestamp_col", self.timestamp_col),
                    ("item_col", self.item_col),
                ]
                .iter()
                .filter(|(_, v)| v.is_none())
                .map(|(k, _)| *k)
                .collect();
                if !missing.is_empty() {
                    return Err(SmorlError::Config(format!(
                        "custom format needs a column mapping for {}",
                        missing.join(", ")
                    )));
                }
                FormatDescriptor::default()
            }
            other => return Err(SmorlError::Config(format!("unknown format {other:?}"))),
        };
        if let Some(d) = self.delimiter {
            fmt.delimiter = d;
        }
        if let Some(h) = self.has_header {
            fmt.has_header = h;
        }
        if let Some(c) = self.session_col {
            fmt.session_col = c;
        }
        if let Some(c) = self.timestamp_col {
            fmt.timestamp_col = c;
        }
        if let Some(c) = self.item_col {
            fmt.item_col = c;
        }
        if self.event_col.is_some() {
            fmt.event_col = self.event_col;
        }
        fmt.max_malformed_fraction = self.max_malformed_fraction;
        Ok(fmt)
    }

    pub fn preprocess_rules(&self) -> PreprocessRules {
        let mut rules = match self.format.as_str() {
            "retailrocket" => PreprocessRules::retailrocket(),
            _ => PreprocessRules::rc15(),
        };
        if let Some(k) = &self.keep_events {
            rules.keep_events = k.clone();
        }
        if self.min_item_frequency.is_some() {
            rules.min_item_frequency = self.min_item_frequency;
        }
        if let Some(l) = self.min_session_length {
            rules.min_session_length = l;
        }
        if self.subsample.is_some() {
            rules.subsample = self.subsample;
        }
        rules.subsample_seed = self.seed;
        rules
    }

    pub fn objective(&self) -> Objective {
        Objective {
            weights: self.weights,
            gamma: self.gamma,
            alpha: self.alpha,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            objective: self.objective(),
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            max_steps: self.max_steps,
            eval_every: self.eval_every,
            seed: self.seed,
            embed_size: self.embed_size,
            hidden_size: self.hidden_size,
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            steps: self.pretrain_steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            embed_size: self.embed_size,
            hidden_size: self.hidden_size,
            seed: self.seed,
        }
    }

    pub fn ratio(&self) -> (usize, usize, usize) {
        (self.split_ratio[0], self.split_ratio[1], self.split_ratio[2])
    }

    /// With `w = (1, 0, 0)` only the accuracy reward is reinforced and the
    /// method coincides with single-objective SQN.
    pub fn is_sqn_equivalent(&self) -> bool {
        self.weights == [1.0, 0.0, 0.0]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_in_order() {
        let cfg = RunConfig::resolve(None, &["alpha=2".into(), "weights=[0,1,1]".into(), "format=retailrocket".into()])
            .unwrap();
        assert_eq!(cfg.alpha, 2.0);
        assert_eq!(cfg.weights, [0.0, 1.0, 1.0]);
        assert_eq!(cfg.preprocess_rules().min_item_frequency, Some(3));
    }

    #[test]
    fn unknown_key_is_config_error() {
        let err = RunConfig::resolve(None, &["alhpa=2".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn custom_format_needs_columns() {
        let err = RunConfig::resolve(None, &["format=custom".into(), "item_col=2".into()]).unwrap_err();
        assert!(err.to_string().contains("session_col"));
    }

    #[test]
    fn sqn_label() {
        let cfg = RunConfig::resolve(None, &["weights=[1,0,0]".into()]).unwrap();
        assert!(cfg.is_sqn_equivalent());
        assert!(!RunConfig::default().is_sqn_equivalent());
    }
}
