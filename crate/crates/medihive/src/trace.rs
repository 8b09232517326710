//! Trace file interchange format: one line-delimited JSON record per pool
//! entry, with fields `{seq, timestamp, author, phase, round, payload}`.
//!
//! Timestamps serialize as RFC 3339. Reloading a trace yields an
//! entry-for-entry identical pool.

use std::io::{self, BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::memory_pool::{MemoryEntry, Snapshot};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt trace at line {line} (last valid seq {last_valid:?}): {reason}")]
    CorruptTrace {
        line: usize,
        last_valid: Option<u64>,
        reason: String,
    },
}

/// Write a snapshot as line-delimited JSON.
pub fn write_trace<W: Write>(snapshot: &Snapshot, mut writer: W) -> Result<(), TraceError> {
    for entry in snapshot.entries() {
        let line = serde_json::to_string(entry.as_ref()).map_err(io::Error::from)?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

pub fn write_trace_file(snapshot: &Snapshot, path: &Path) -> Result<(), TraceError> {
    let file = std::fs::File::create(path)?;
    let mut buf = io::BufWriter::new(file);
    write_trace(snapshot, &mut buf)?;
    buf.flush()?;
    Ok(())
}

/// Read a trace back into a snapshot, verifying seq contiguity.
pub fn read_trace<R: BufRead>(reader: R) -> Result<Snapshot, TraceError> {
    let mut entries: Vec<Arc<MemoryEntry>> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let last_valid = entries.last().map(|e| e.seq);
        let corrupt = |reason: String| TraceError::CorruptTrace {
            line: line_no,
            last_valid,
            reason,
        };
        let line = line.map_err(|e| corrupt(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: MemoryEntry = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        if entry.seq != entries.len() as u64 {
            return Err(corrupt(format!(
                "expected seq {}, found {}",
                entries.len(),
                entry.seq
            )));
        }
        if entry.payload.phase() != entry.phase {
            return Err(corrupt(format!(
                "payload does not match phase {}",
                entry.phase
            )));
        }
        entries.push(Arc::new(entry));
    }
    Ok(Snapshot::from_entries(entries))
}

pub fn read_trace_file(path: &Path) -> Result<Snapshot, TraceError> {
    let file = std::fs::File::open(path)?;
    read_trace(io::BufReader::new(file))
}
