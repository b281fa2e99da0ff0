//! Append-only judgment log, one JSON object per line. A record counts as
//! stored once its line is synced to disk.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("judgment log {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("judgment log {path} line {line} is not a judgment record")]
    Corrupt { path: String, line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub participant: String,
    pub item_id: u64,
    pub choice: Choice,
    /// Milliseconds since the Unix epoch, assigned by the service.
    pub timestamp_ms: u64,
}

#[derive(Debug)]
pub struct JudgmentLog {
    path: PathBuf,
    file: File,
    records: Vec<JudgmentRecord>,
}

impl JudgmentLog {
    /// Opens or creates the log and replays it. An unterminated final line is
    /// a write interrupted before acknowledgment and is cut off; any other
    /// unreadable line is an error.
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let io = |source| LogError::Io { path: path.display().to_string(), source };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io(e)),
        };
        let complete = match text.rfind('\n') {
            Some(i) => i + 1,
            None => 0,
        };
        let mut records = Vec::new();
        for (i, line) in text[..complete].lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r = serde_json::from_str(line)
                .map_err(|_| LogError::Corrupt { path: path.display().to_string(), line: i + 1 })?;
            records.push(r);
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        if complete < text.len() {
            file.set_len(complete as u64).map_err(io)?;
        }
        Ok(Self { path: path.to_path_buf(), file, records })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes and syncs one record; on error nothing is added in memory.
    pub fn append(&mut self, record: JudgmentRecord) -> Result<(), LogError> {
        let mut line = serde_json::to_string(&record).expect("records serialize");
        line.push('\n');
        let io = |source| LogError::Io { path: self.path.display().to_string(), source };
        self.file.write_all(line.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)?;
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[JudgmentRecord] {
        &self.records
    }
}

/// Effective choice per `(participant, item)`: the latest record wins.
pub fn effective_judgments(records: &[JudgmentRecord]) -> BTreeMap<(String, u64), Choice> {
    let mut out = BTreeMap::new();
    for r in records {
        out.insert((r.participant.clone(), r.item_id), r.choice);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(p: &str, item: u64, choice: Choice) -> JudgmentRecord {
        JudgmentRecord { participant: p.into(), item_id: item, choice, timestamp_ms: 1 }
    }

    #[test]
    fn replay_restores_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        {
            let mut log = JudgmentLog::open(&path).unwrap();
            log.append(rec("p1", 1, Choice::A)).unwrap();
            log.append(rec("p1", 1, Choice::B)).unwrap();
        }
        let log = JudgmentLog::open(&path).unwrap();
        assert_eq!(log.records().len(), 2);
        let eff = effective_judgments(log.records());
        assert_eq!(eff[&("p1".to_string(), 1)], Choice::B);
    }

    #[test]
    fn torn_tail_is_dropped_and_corruption_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        let good = serde_json::to_string(&rec("p", 2, Choice::A)).unwrap();
        std::fs::write(&path, format!("{good}\n{{\"participant\":\"p\",\"ite")).unwrap();
        let mut log = JudgmentLog::open(&path).unwrap();
        assert_eq!(log.records().len(), 1);
        log.append(rec("p", 3, Choice::B)).unwrap();
        assert_eq!(JudgmentLog::open(&path).unwrap().records().len(), 2);

        std::fs::write(&path, format!("garbage\n{good}\n")).unwrap();
        assert!(matches!(JudgmentLog::open(&path), Err(LogError::Corrupt { line: 1, .. })));
    }
}
