use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use crate::checkpoint::file_sha256;
use crate::data::{
    load_dataset, load_events, make_examples_for, preprocess, save_dataset, split, Fold, ItemCatalog, SessionDataset,
    SplitSet, SEQ_LEN,
};
use crate::encoder::{pretrain_diversity_embedding, EncoderModel};
use crate::error::{Result, SmorlError};
use crate::metrics::{evaluate, MetricsReport, REPORT_KS};
use crate::rewards::DiversityEmbedding;
use crate::smorl::{train, LogRecord, TrainInputs, TrainObserver, TrainerState};

pub const DATASET_FILE: &str = "dataset.smorlds";
pub const SPLITS_FILE: &str = "splits.json";
pub const STATS_FILE: &str = "stats.json";
pub const EMBEDDING_FILE: &str = "e_div.ckpt";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const STATE_FILE: &str = "trainer_state.ckpt";
pub const BEST_FILE: &str = "best.ckpt";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const PLOT_FILE: &str = "plot.tsv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";

pub const WEIGHT_SWEEP: [[f64; 3]; 6] = [
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 1.0, 1.0],
    [1.0, 1.0, 0.0],
    [1.0, 0.0, 1.0],
    [1.0, 1.0, 1.0],
];

pub const ALPHA_SWEEP: [f64; 7] = [0.5, 0.75, 1.0, 2.0, 3.0, 5.0, 10.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepAxis {
    Weights,
    Alpha,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| SmorlError::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| SmorlError::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable value")
}

fn require<'a>(v: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    v.as_deref()
        .ok_or_else(|| SmorlError::Config(format!("`{key}` must be set")))
}

/// Writes `config.json` and `manifest.json` into `out`. Artifacts are listed
/// with their SHA-256 digests.
pub fn write_manifest(out: &Path, command: &str, cfg: &RunConfig, artifacts: &[&str], extra: serde_json::Value) -> Result<()> {
    write_file(&out.join(CONFIG_FILE), cfg.to_json().as_bytes())?;
    let mut sums = serde_json::Map::new();
    for name in artifacts {
        sums.insert((*name).to_string(), serde_json::Value::String(file_sha256(out.join(name))?));
    }
    let mut labels = Vec::new();
    if cfg.is_sqn_equivalent() {
        labels.push("SQN-equivalent");
    }
    let manifest = serde_json::json!({
        "software": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "created": chrono::Utc::now().to_rfc3339(),
        "seed": cfg.seed,
        "labels": labels,
        "config": cfg,
        "artifacts": sums,
        "details": extra,
    });
    write_file(&out.join(MANIFEST_FILE), to_json(&manifest).as_bytes())
}

/// Reads events, preprocesses, splits and writes the dataset artifacts.
pub fn cmd_prepare(cfg: &RunConfig) -> Result<PathBuf> {
    let raw = require(&cfg.raw_path, "raw_path")?;
    let fmt = cfg.format_descriptor()?;
    let log = load_events(raw, &fmt)?;
    let ds = preprocess(&log, &cfg.preprocess_rules())?;
    let splits = split(ds.n_sessions(), cfg.ratio(), cfg.folds, cfg.seed)?;
    let out = cfg.out_dir.clone();
    create_dir(&out)?;
    save_dataset(&ds, out.join(DATASET_FILE))?;
    write_file(&out.join(SPLITS_FILE), to_json(&splits).as_bytes())?;
    let stats = serde_json::json!({
        "stats": ds.stats(),
        "malformed_rows": log.malformed,
        "raw_events": log.len(),
    });
    write_file(&out.join(STATS_FILE), to_json(&stats).as_bytes())?;
    write_manifest(&out, "prepare", cfg, &[DATASET_FILE, SPLITS_FILE, STATS_FILE], serde_json::json!({}))?;
    log::info!(
        "prepared {} sessions over {} items into {}",
        ds.n_sessions(),
        ds.n_items(),
        out.display()
    );
    Ok(out)
}

pub struct Prepared {
    pub dataset: SessionDataset,
    pub splits: SplitSet,
}

impl Prepared {
    pub fn load(dir: &Path) -> Result<Self> {
        let dataset = load_dataset(dir.join(DATASET_FILE))?;
        let path = dir.join(SPLITS_FILE);
        let text = fs::read_to_string(&path).map_err(|e| SmorlError::io(&path, e))?;
        let splits: SplitSet =
            serde_json::from_str(&text).map_err(|e| SmorlError::Format(format!("{}: {e}", path.display())))?;
        for f in &splits.folds {
            if f.train.iter().chain(&f.validation).chain(&f.test).any(|&s| s >= dataset.n_sessions()) {
                return Err(SmorlError::Format("split refers to sessions outside the dataset".into()));
            }
        }
        Ok(Prepared { dataset, splits })
    }

    pub fn fold(&self, k: usize) -> Result<&Fold> {
        self.splits.folds.get(k).ok_or(SmorlError::Index {
            what: "fold",
            index: k,
            limit: self.splits.folds.len(),
        })
    }

    /// Popularity from the fold's training sessions.
    pub fn catalog(&self, k: usize, x_percent: f64) -> Result<ItemCatalog> {
        let fold = self.fold(k)?;
        Ok(ItemCatalog::from_sessions(
            self.dataset.n_items(),
            fold.train.iter().map(|&s| self.dataset.sessions[s].as_slice()),
            x_percent,
        ))
    }
}

/// Supervised-only pretraining on the fold's training split; keeps the
/// frozen item embedding.
pub fn cmd_pretrain_embedding(cfg: &RunConfig) -> Result<PathBuf> {
    let prepared = Prepared::load(require(&cfg.dataset, "dataset")?)?;
    let fold = prepared.fold(cfg.fold)?;
    let examples = make_examples_for(&prepared.dataset, &fold.train, SEQ_LEN);
    let emb = pretrain_diversity_embedding(prepared.dataset.n_items(), &examples, &cfg.pretrain_config())?;
    let out = cfg.out_dir.clone();
    create_dir(&out)?;
    let path = out.join(EMBEDDING_FILE);
    let digest = emb.save(&path)?;
    write_manifest(
        &out,
        "pretrain-embedding",
        cfg,
        &[EMBEDDING_FILE],
        serde_json::json!({ "e_div_sha256": digest, "frozen": true }),
    )?;
    Ok(path)
}

fn load_embedding(cfg: &RunConfig, required: bool) -> Result<Option<DiversityEmbedding>> {
    match &cfg.embedding {
        Some(p) => {
            if !p.exists() {
                return Err(SmorlError::Config(format!("diversity embedding {} does not exist", p.display())));
            }
            DiversityEmbedding::load(p).map(Some)
        }
        None if required => Err(SmorlError::Config(
            "weights[1] > 0 requires `embedding` (run pretrain-embedding first)".into(),
        )),
        None => Ok(None),
    }
}

struct FileObserver {
    log: BufWriter<File>,
    log_path: PathBuf,
    state_path: PathBuf,
    validation: csv::Writer<File>,
    cfg: crate::smorl::TrainConfig,
    run_id: String,
    fold: usize,
}

impl TrainObserver for FileObserver {
    fn on_step(&mut self, record: &LogRecord) -> Result<()> {
        let line = serde_json::to_string(record).map_err(|e| SmorlError::Format(e.to_string()))?;
        writeln!(self.log, "{line}").map_err(|e| SmorlError::io(&self.log_path, e))
    }

    fn on_eval(&mut self, state: &TrainerState, record: &LogRecord) -> Result<()> {
        self.log.flush().map_err(|e| SmorlError::io(&self.log_path, e))?;
        if let Some(report) = &record.validation {
            self.validation
                .write_record(report.csv_row(&self.run_id, &self.fold.to_string(), &record.step.to_string()))
                .map_err(|e| SmorlError::Format(e.to_string()))?;
            self.validation.flush().map_err(|e| SmorlError::io(&self.state_path, e))?;
        }
        state.save(&self.cfg, &self.state_path)
    }
}

/// Keeps the first log lines up to and including `step`.
fn truncate_log(path: &Path, step: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let file = File::open(path).map_err(|e| SmorlError::io(path, e))?;
    let mut kept = String::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| SmorlError::io(path, e))?;
        let rec: LogRecord =
            serde_json::from_str(&line).map_err(|e| SmorlError::Format(format!("{}: {e}", path.display())))?;
        if rec.step <= step {
            kept.push_str(&line);
            kept.push('\n');
        }
    }
    write_file(path, kept.as_bytes())
}

fn rewrite_validation(path: &Path, log_path: &Path, run_id: &str, fold: usize) -> Result<csv::Writer<File>> {
    let mut w = csv::Writer::from_path(path).map_err(|e| SmorlError::Format(e.to_string()))?;
    w.write_record(MetricsReport::csv_header())
        .map_err(|e| SmorlError::Format(e.to_string()))?;
    if log_path.exists() {
        let text = fs::read_to_string(log_path).map_err(|e| SmorlError::io(log_path, e))?;
        for line in text.lines() {
            let rec: LogRecord = serde_json::from_str(line).map_err(|e| SmorlError::Format(e.to_string()))?;
            if let Some(v) = &rec.validation {
                w.write_record(v.csv_row(run_id, &fold.to_string(), &rec.step.to_string()))
                    .map_err(|e| SmorlError::Format(e.to_string()))?;
            }
        }
    }
    w.flush().map_err(|e| SmorlError::io(path, e))?;
    Ok(w)
}

pub struct TrainSummary {
    pub out_dir: PathBuf,
    pub model: EncoderModel,
    pub best_step: Option<u64>,
    pub steps: u64,
}

/// SMORL training with per-cadence validation, a resumable trainer state and
/// the best-validation encoder.
pub fn cmd_train(cfg: &RunConfig, resume: bool) -> Result<TrainSummary> {
    let tcfg = cfg.train_config();
    let emb = load_embedding(cfg, tcfg.objective.weights[1] > 0.0)?;
    let prepared = Prepared::load(require(&cfg.dataset, "dataset")?)?;
    let fold = prepared.fold(cfg.fold)?;
    let catalog = prepared.catalog(cfg.fold, cfg.x_percent)?;
    let out = cfg.out_dir.clone();
    create_dir(&out)?;
    let log_path = out.join(LOG_FILE);
    let state_path = out.join(STATE_FILE);

    let state = if resume {
        if !state_path.exists() {
            return Err(SmorlError::Config(format!("cannot resume: {} does not exist", state_path.display())));
        }
        let s = TrainerState::load(&tcfg, &state_path)?;
        truncate_log(&log_path, s.step)?;
        log::info!("resuming from step {}", s.step);
        Some(s)
    } else {
        if log_path.exists() {
            fs::remove_file(&log_path).map_err(|e| SmorlError::io(&log_path, e))?;
        }
        None
    };
    let run_id = out
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let validation = rewrite_validation(&out.join(VALIDATION_FILE), &log_path, &run_id, cfg.fold)?;
    let log_file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| SmorlError::io(&log_path, e))?;
    let mut observer = FileObserver {
        log: BufWriter::new(log_file),
        log_path: log_path.clone(),
        state_path: state_path.clone(),
        validation,
        cfg: tcfg.clone(),
        run_id,
        fold: cfg.fold,
    };
    let inputs = TrainInputs {
        dataset: &prepared.dataset,
        fold,
        catalog: &catalog,
        diversity: emb.as_ref(),
    };
    let outcome = train(inputs, &tcfg, state, &mut observer)?;
    observer.log.flush().map_err(|e| SmorlError::io(&log_path, e))?;
    drop(observer);
    outcome.state.save(&tcfg, &state_path)?;
    outcome.model.save(out.join(BEST_FILE))?;
    let best_step = outcome.state.best.as_ref().map(|b| b.step);
    write_manifest(
        &out,
        "train",
        cfg,
        &[BEST_FILE, STATE_FILE, LOG_FILE, VALIDATION_FILE],
        serde_json::json!({
            "best_step": best_step,
            "best_validation_ndcg20": outcome.state.best.as_ref().map(|b| b.ndcg20),
            "steps": outcome.state.step,
            "branch_counts": outcome.state.branch_counts,
            "embedding_sha256": cfg.embedding.as_ref().map(file_sha256).transpose()?,
        }),
    )?;
    Ok(TrainSummary {
        out_dir: out,
        model: outcome.model,
        best_step,
        steps: outcome.state.step,
    })
}

fn checkpoint_for_fold(template: &Path, fold: usize) -> PathBuf {
    PathBuf::from(template.to_string_lossy().replace("{fold}", &fold.to_string()))
}

fn write_plot(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut text = String::from("k\thr\tndcg\tcv_all\tcv_longtail\n");
    for c in &report.cutoffs {
        text.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", c.k, c.hr, c.ndcg, c.cv_all, c.cv_longtail));
    }
    write_file(path, text.as_bytes())
}

fn write_csv(path: &Path, header: Vec<String>, rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| SmorlError::Format(e.to_string()))?;
    w.write_record(header).map_err(|e| SmorlError::Format(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| SmorlError::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| SmorlError::io(path, e))
}

fn test_report(prepared: &Prepared, cfg: &RunConfig, fold: usize, model: &EncoderModel) -> Result<MetricsReport> {
    let emb = load_embedding(cfg, false)?;
    if model.n_items() != prepared.dataset.n_items() {
        return Err(SmorlError::Config(format!(
            "model covers {} items, dataset has {}",
            model.n_items(),
            prepared.dataset.n_items()
        )));
    }
    let catalog = prepared.catalog(fold, cfg.x_percent)?;
    let report = evaluate(
        model,
        &prepared.dataset,
        &prepared.fold(fold)?.test,
        &catalog,
        emb.as_ref(),
        &REPORT_KS,
    )?;
    report.check_invariants()?;
    Ok(report)
}

/// Test-split metrics of a checkpoint. With `all_folds`, a `{fold}` in the
/// checkpoint path is replaced by each fold index and a mean row is added.
pub fn cmd_evaluate(cfg: &RunConfig, checkpoint: &Path, all_folds: bool) -> Result<Vec<MetricsReport>> {
    let prepared = Prepared::load(require(&cfg.dataset, "dataset")?)?;
    let folds: Vec<usize> = if all_folds {
        (0..prepared.splits.folds.len()).collect()
    } else {
        vec![cfg.fold]
    };
    let mut reports = Vec::with_capacity(folds.len());
    let mut rows = Vec::new();
    let run_id = checkpoint
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    for &f in &folds {
        let path = checkpoint_for_fold(checkpoint, f);
        if !path.exists() {
            return Err(SmorlError::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found"),
            ));
        }
        let model = EncoderModel::load(&path)?;
        let report = test_report(&prepared, cfg, f, &model)?;
        rows.push(report.csv_row(&run_id, &f.to_string(), ""));
        reports.push(report);
    }
    let summary = if all_folds {
        let mean = MetricsReport::mean(&reports)?;
        rows.push(mean.csv_row(&run_id, "mean", ""));
        mean
    } else {
        reports[0].clone()
    };
    let out = cfg.out_dir.clone();
    create_dir(&out)?;
    write_file(
        &out.join(METRICS_JSON),
        to_json(&serde_json::json!({ "folds": folds, "reports": reports, "summary": summary })).as_bytes(),
    )?;
    write_csv(&out.join(METRICS_CSV), MetricsReport::csv_header(), &rows)?;
    write_plot(&out.join(PLOT_FILE), &summary)?;
    write_manifest(
        &out,
        "evaluate",
        cfg,
        &[METRICS_JSON, METRICS_CSV, PLOT_FILE],
        serde_json::json!({ "checkpoint": checkpoint.display().to_string() }),
    )?;
    Ok(reports)
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// Label and config of every setting along `axis`.
pub fn sweep_settings(cfg: &RunConfig, axis: SweepAxis) -> Vec<(String, RunConfig)> {
    match axis {
        SweepAxis::Weights => WEIGHT_SWEEP
            .iter()
            .map(|w| {
                let label = format!("w={}-{}-{}", fmt_num(w[0]), fmt_num(w[1]), fmt_num(w[2]));
                (label, RunConfig { weights: *w, ..cfg.clone() })
            })
            .collect(),
        SweepAxis::Alpha => ALPHA_SWEEP
            .iter()
            .map(|&a| (format!("alpha={}", fmt_num(a)), RunConfig { alpha: a, ..cfg.clone() }))
            .collect(),
    }
}

/// Trains and tests every setting of `axis` under one shared seed.
pub fn cmd_sweep(cfg: &RunConfig, axis: SweepAxis) -> Result<PathBuf> {
    let settings = sweep_settings(cfg, axis);
    if settings.iter().any(|(_, c)| c.weights[1] > 0.0) {
        load_embedding(cfg, true)?;
    }
    let prepared = Prepared::load(require(&cfg.dataset, "dataset")?)?;
    let out = cfg.out_dir.clone();
    create_dir(&out)?;
    let mut header = vec!["setting".to_string()];
    header.extend(MetricsReport::csv_header());
    let mut rows = Vec::new();
    let mut seeds = Vec::new();
    for (label, mut c) in settings {
        c.out_dir = out.join(&label);
        let summary = cmd_train(&c, false)?;
        let report = test_report(&prepared, &c, c.fold, &summary.model)?;
        let mut row = vec![label.clone()];
        row.extend(report.csv_row(&label, &c.fold.to_string(), &summary.steps.to_string()));
        rows.push(row);
        seeds.push(serde_json::json!({ "setting": label, "seed": c.seed }));
    }
    write_csv(&out.join(SWEEP_FILE), header, &rows)?;
    write_manifest(
        &out,
        "sweep",
        cfg,
        &[SWEEP_FILE],
        serde_json::json!({ "axis": format!("{axis:?}").to_lowercase(), "settings": seeds }),
    )?;
    Ok(out)
}
