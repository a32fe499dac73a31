use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::acquisition::Engine;

mod timestamp_format {
    use chrono::{DateTime, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&ts.format("%Y-%m-%dT%H:%M:%SZ"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&raw)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

/// One suggestion shown at `position` during fetch session `session_id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionRecord {
    pub session_id: u64,
    pub engine: Engine,
    pub query_term: String,
    #[serde(with = "timestamp_format")]
    pub timestamp: DateTime<Utc>,
    pub suggestion: String,
    pub position: u32,
}

/// Checks record-level and per-session invariants of a batch.
///
/// Session ids are positive, suggestions non-empty, timestamps whole
/// seconds, and within each session the positions are exactly `0..n`.
pub fn validate_batch(batch: &[SuggestionRecord]) -> Result<(), StoreError> {
    let mut sessions: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
    for (i, r) in batch.iter().enumerate() {
        if r.session_id == 0 {
            return Err(StoreError::Validation(format!(
                "record {i}: session_id must be positive"
            )));
        }
        if r.suggestion.trim().is_empty() {
            return Err(StoreError::Validation(format!(
                "record {i}: empty suggestion in session {}",
                r.session_id
            )));
        }
        if r.timestamp.nanosecond() != 0 {
            return Err(StoreError::Validation(format!(
                "record {i}: timestamp has sub-second precision"
            )));
        }
        sessions.entry(r.session_id).or_default().push(r.position);
    }
    for (session, mut positions) in sessions {
        positions.sort_unstable();
        if positions.iter().enumerate().any(|(i, &p)| p as usize != i) {
            return Err(StoreError::Validation(format!(
                "session {session}: positions {positions:?} are not 0..{}",
                positions.len()
            )));
        }
    }
    Ok(())
}

/// Consumer of record batches produced by the crawler.
pub trait RecordSink {
    /// Appends `batch`, returning the number of records written.
    fn append(&mut self, batch: &[SuggestionRecord]) -> Result<usize, StoreError>;
}

impl RecordSink for Vec<SuggestionRecord> {
    fn append(&mut self, batch: &[SuggestionRecord]) -> Result<usize, StoreError> {
        validate_batch(batch)?;
        self.extend_from_slice(batch);
        Ok(batch.len())
    }
}

/// Record selection; `None` fields match everything.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordFilter {
    pub engines: Option<BTreeSet<Engine>>,
    pub terms: Option<BTreeSet<String>>,
    /// Inclusive lower bound.
    pub from: Option<DateTime<Utc>>,
    /// Inclusive upper bound.
    pub to: Option<DateTime<Utc>>,
}

impl RecordFilter {
    pub fn engine(engine: Engine) -> Self {
        Self {
            engines: Some([engine].into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        if let (Some(from), Some(to)) = (self.from, self.to) {
            if from > to {
                return Err(StoreError::Filter(format!(
                    "start {from} is after end {to}"
                )));
            }
        }
        Ok(())
    }

    pub fn matches(&self, r: &SuggestionRecord) -> bool {
        self.engines.as_ref().is_none_or(|e| e.contains(&r.engine))
            && self
                .terms
                .as_ref()
                .is_none_or(|t| t.contains(&r.query_term))
            && self.from.is_none_or(|from| r.timestamp >= from)
            && self.to.is_none_or(|to| r.timestamp <= to)
    }

    /// Filters and sorts `records` by (timestamp, session, position).
    pub fn apply(&self, records: &[SuggestionRecord]) -> Vec<SuggestionRecord> {
        let mut out: Vec<SuggestionRecord> = records
            .iter()
            .filter(|r| self.matches(r))
            .cloned()
            .collect();
        out.sort_by(|a, b| {
            (a.timestamp, a.session_id, a.position).cmp(&(b.timestamp, b.session_id, b.position))
        });
        out
    }
}

/// Parses JSON-lines records. Blank lines and lines starting with `#` are
/// skipped; an unterminated final line that does not parse is treated as an
/// in-progress write and ignored.
pub fn read_records<R: Read>(reader: R, source: &str) -> Result<Vec<SuggestionRecord>, StoreError> {
    let mut reader = BufReader::new(reader);
    let mut out = Vec::new();
    let mut line = String::new();
    let mut number = 0;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        number += 1;
        let terminated = line.ends_with('\n');
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        match serde_json::from_str::<SuggestionRecord>(text) {
            Ok(r) => out.push(r),
            Err(_) if !terminated => break,
            Err(e) => {
                return Err(StoreError::Format {
                    path: source.to_string(),
                    line: number,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// JSON-lines record file opened for appending.
#[derive(Debug, Clone)]
pub struct RecordStore {
    path: PathBuf,
}

impl RecordStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Validates and appends `batch` in order, syncing before returning.
    pub fn append_records(&self, batch: &[SuggestionRecord]) -> Result<usize, StoreError> {
        validate_batch(batch)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        let mut writer = BufWriter::new(file);
        let mut buf = Vec::new();
        for r in batch {
            buf.clear();
            serde_json::to_writer(&mut buf, r).map_err(std::io::Error::other)?;
            buf.push(b'\n');
            writer.write_all(&buf)?;
        }
        let file = writer.into_inner().map_err(|e| e.into_error())?;
        file.sync_data()?;
        Ok(batch.len())
    }

    /// Loads the records matching `filter`, ordered by (timestamp, session, position).
    ///
    /// A store file that does not exist yet is empty.
    pub fn load_records(&self, filter: &RecordFilter) -> Result<Vec<SuggestionRecord>, StoreError> {
        filter.validate()?;
        let file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let all = read_records(file, &self.path.display().to_string())?;
        Ok(filter.apply(&all))
    }

    /// Largest session id in the store, or 0 when empty.
    pub fn max_session_id(&self) -> Result<u64, StoreError> {
        Ok(self
            .load_records(&RecordFilter::default())?
            .iter()
            .map(|r| r.session_id)
            .max()
            .unwrap_or(0))
    }
}

impl RecordSink for RecordStore {
    fn append(&mut self, batch: &[SuggestionRecord]) -> Result<usize, StoreError> {
        self.append_records(batch)
    }
}

/// Distinct `(engine, term)` pairs, handy for reporting.
pub(crate) fn distinct_engines(records: &[SuggestionRecord]) -> HashSet<Engine> {
    records.iter().map(|r| r.engine).collect()
}
