//! Line-based `SMORLDS1` dataset container.
//!
//! ```text
//! SMORLDS1
//! items <n>
//! <index>\t<item id>          (n lines, index 1..=n)
//! sessions <count>
//! <session id>\t<i1> <i2> ... (count lines)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::preprocess::SessionDataset;
use crate::error::{Result, SmorlError};

pub const DATASET_MAGIC: &str = "SMORLDS1";

fn check_token(s: &str, what: &str) -> Result<()> {
    if s.is_empty() || s.contains(['\t', '\n', '\r']) {
        return Err(SmorlError::Format(format!("{what} {s:?} cannot be stored (empty or contains tab/newline)")));
    }
    Ok(())
}

pub fn encode_dataset(ds: &SessionDataset) -> Result<String> {
    let mut out = String::with_capacity(16 * ds.n_clicks() + 32 * ds.n_items());
    out.push_str(DATASET_MAGIC);
    out.push('\n');
    let _ = writeln!(out, "items {}", ds.n_items());
    for (i, id) in ds.item_ids.iter().enumerate() {
        check_token(id, "item id")?;
        let _ = writeln!(out, "{}\t{}", i + 1, id);
    }
    let _ = writeln!(out, "sessions {}", ds.n_sessions());
    for (sid, s) in ds.session_ids.iter().zip(&ds.sessions) {
        check_token(sid, "session id")?;
        out.push_str(sid);
        out.push('\t');
        for (k, item) in s.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{item}");
        }
        out.push('\n');
    }
    Ok(out)
}

fn bad(line: usize, msg: impl std::fmt::Display) -> SmorlError {
    SmorlError::Format(format!("dataset line {line}: {msg}"))
}

fn header_count(line: Option<(usize, &str)>, key: &str) -> Result<usize> {
    let (no, text) = line.ok_or_else(|| bad(0, format!("missing '{key}' header")))?;
    text.strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .and_then(|r| r.parse().ok())
        .ok_or_else(|| bad(no + 1, format!("expected '{key} <count>', got {text:?}")))
}

pub fn decode_dataset(text: &str) -> Result<SessionDataset> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, DATASET_MAGIC)) => {}
        other => {
            return Err(SmorlError::Format(format!(
                "not a dataset file: expected {DATASET_MAGIC:?} header, got {:?}",
                other.map(|(_, l)| l)
            )))
        }
    }
    let n = header_count(lines.next(), "items")?;
    let mut item_ids = Vec::with_capacity(n);
    for expect in 1..=n {
        let (no, line) = lines.next().ok_or_else(|| bad(0, "truncated item table"))?;
        let (idx, id) = line.split_once('\t').ok_or_else(|| bad(no + 1, "missing tab"))?;
        if idx.parse::<usize>().ok() != Some(expect) {
            return Err(bad(no + 1, format!("expected item index {expect}")));
        }
        item_ids.push(id.to_string());
    }
    let count = header_count(lines.next(), "sessions")?;
    let mut session_ids = Vec::with_capacity(count);
    let mut sessions = Vec::with_capacity(count);
    for _ in 0..count {
        let (no, line) = lines.next().ok_or_else(|| bad(0, "truncated session table"))?;
        let (sid, rest) = line.split_once('\t').ok_or_else(|| bad(no + 1, "missing tab"))?;
        let items = rest
            .split(' ')
            .map(|t| match t.parse::<usize>() {
                Ok(i) if (1..=n).contains(&i) => Ok(i),
                _ => Err(bad(no + 1, format!("invalid item index {t:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        session_ids.push(sid.to_string());
        sessions.push(items);
    }
    if let Some((no, _)) = lines.next() {
        return Err(bad(no + 1, "trailing content"));
    }
    Ok(SessionDataset {
        session_ids,
        sessions,
        item_ids,
    })
}

pub fn save_dataset(ds: &SessionDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_dataset(ds)?).map_err(|e| SmorlError::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<SessionDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SmorlError::io(path, e))?;
    decode_dataset(&text)
}
