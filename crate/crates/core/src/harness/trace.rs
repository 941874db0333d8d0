//! Response traces and their JSON-lines files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::api::ResponseRecord;

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub id: u64,
    pub response_time_ms: u64,
    pub status_code: u16,
    /// Stand-in for a request that never got an answer.
    #[serde(default, skip_serializing_if = "is_false")]
    pub synthetic: bool,
}

impl From<&ResponseRecord> for TraceRecord {
    fn from(r: &ResponseRecord) -> Self {
        Self {
            id: r.request_id,
            response_time_ms: r.response_time_ms,
            status_code: r.status_code,
            synthetic: false,
        }
    }
}

/// Responses of one endpoint, ordered by request id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, r: TraceRecord) {
        self.records.push(r);
    }

    pub fn response_times(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.response_time_ms as f64)
            .collect()
    }

    pub fn status_codes(&self) -> Vec<u16> {
        self.records.iter().map(|r| r.status_code).collect()
    }

    pub fn is_partial(&self) -> bool {
        self.records.iter().any(|r| r.synthetic)
    }

    pub fn is_ordered(&self) -> bool {
        self.records.windows(2).all(|w| w[0].id < w[1].id)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), HarnessError> {
        write_jsonl(path, &self.records)
    }

    pub fn read_jsonl(path: &Path) -> Result<Self, HarnessError> {
        let records: Vec<TraceRecord> = read_jsonl(path)?;
        let t = Self { records };
        if !t.is_ordered() {
            return Err(HarnessError::Parse(format!(
                "{}: records are not ordered by id",
                path.display()
            )));
        }
        Ok(t)
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), HarnessError> {
    let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| HarnessError::Parse(e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", path.display()));
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| HarnessError::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}
