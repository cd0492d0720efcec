use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SmorlError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Click,
    View,
    Purchase,
    AddToCart,
}

impl FromStr for EventType {
    type Err = SmorlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "click" | "clicks" => Ok(EventType::Click),
            "view" | "views" => Ok(EventType::View),
            "purchase" | "buy" | "buys" | "transaction" => Ok(EventType::Purchase),
            "add_to_cart" | "addtocart" | "cart" => Ok(EventType::AddToCart),
            other => Err(SmorlError::Format(format!("unknown event type {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventRecord {
    pub session_id: String,
    pub timestamp: i64,
    pub item_id: String,
    pub event_type: EventType,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventLog {
    pub records: Vec<EventRecord>,
    /// Rows that failed to parse and were skipped.
    pub malformed: usize,
}

impl EventLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Column mapping for a delimited event file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormatDescriptor {
    pub delimiter: char,
    pub has_header: bool,
    pub session_col: usize,
    pub timestamp_col: usize,
    pub item_col: usize,
    /// When absent every row is read as `default_event`.
    pub event_col: Option<usize>,
    pub default_event: EventType,
    /// Largest tolerated fraction of malformed rows.
    pub max_malformed_fraction: f64,
}

impl Default for FormatDescriptor {
    fn default() -> Self {
        FormatDescriptor {
            delimiter: ',',
            has_header: false,
            session_col: 0,
            timestamp_col: 1,
            item_col: 2,
            event_col: None,
            default_event: EventType::Click,
            max_malformed_fraction: 0.01,
        }
    }
}

impl FormatDescriptor {
    /// `session,timestamp,item,category` click files.
    pub fn rc15() -> Self {
        FormatDescriptor::default()
    }

    /// `timestamp,visitorid,event,itemid,transactionid` with a header row.
    pub fn retailrocket() -> Self {
        FormatDescriptor {
            delimiter: ',',
            has_header: true,
            session_col: 1,
            timestamp_col: 0,
            item_col: 3,
            event_col: Some(2),
            ..FormatDescriptor::default()
        }
    }
}

fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    chrono::DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|dt| dt.timestamp_millis())
}

fn parse_row(row: &csv::StringRecord, fmt: &FormatDescriptor) -> Option<EventRecord> {
    let field = |i: usize| row.get(i).map(str::trim).filter(|s| !s.is_empty());
    let session_id = field(fmt.session_col)?.to_string();
    let timestamp = parse_timestamp(field(fmt.timestamp_col)?)?;
    let item_id = field(fmt.item_col)?.to_string();
    let event_type = match fmt.event_col {
        Some(c) => field(c)?.parse().ok()?,
        None => fmt.default_event,
    };
    Some(EventRecord {
        session_id,
        timestamp,
        item_id,
        event_type,
    })
}

/// Parses events from any reader. Malformed rows are skipped and counted; if
/// their share exceeds `fmt.max_malformed_fraction` the whole load fails.
pub fn read_events<R: Read>(reader: R, fmt: &FormatDescriptor) -> Result<EventLog> {
    if !fmt.delimiter.is_ascii() {
        return Err(SmorlError::Config(format!("delimiter {:?} is not ASCII", fmt.delimiter)));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(fmt.delimiter as u8)
        .has_headers(fmt.has_header)
        .flexible(true)
        .from_reader(reader);

    let mut log = EventLog::default();
    let mut first_bad: Option<(u64, String)> = None;
    let mut rows = 0usize;
    for result in rdr.records() {
        rows += 1;
        let parsed = match &result {
            Ok(row) => parse_row(row, fmt),
            Err(_) => None,
        };
        match parsed {
            Some(rec) => log.records.push(rec),
            None => {
                log.malformed += 1;
                if first_bad.is_none() {
                    let (line, text) = match &result {
                        Ok(row) => (
                            row.position().map_or(0, |p| p.line()),
                            row.iter().collect::<Vec<_>>().join(&fmt.delimiter.to_string()),
                        ),
                        Err(e) => (e.position().map_or(0, |p| p.line()), e.to_string()),
                    };
                    first_bad = Some((line, text));
                }
            }
        }
    }
    if rows > 0 && log.malformed as f64 / rows as f64 > fmt.max_malformed_fraction {
        let (line, text) = first_bad.unwrap_or_default();
        return Err(SmorlError::Format(format!(
            "{} of {} rows malformed (limit {:.2}%); first at line {}: {:?}",
            log.malformed,
            rows,
            fmt.max_malformed_fraction * 100.0,
            line,
            text
        )));
    }
    if log.malformed > 0 {
        log::warn!("skipped {} malformed rows of {}", log.malformed, rows);
    }
    Ok(log)
}

pub fn load_events(path: impl AsRef<Path>, fmt: &FormatDescriptor) -> Result<EventLog> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| SmorlError::io(path, e))?;
    read_events(std::io::BufReader::new(file), fmt)
}
