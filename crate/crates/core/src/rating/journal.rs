use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RatingError, RatingRecord};

/// One line of the journal. Session state is rebuilt by replaying these in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
pub enum JournalEvent {
    SessionCreated { session_id: String, rater_id: String, seed: u64, order: Vec<String>, at: u64 },
    Served { session_id: String, case_id: String, at: u64 },
    BreakStarted { session_id: String, at: u64, until: u64 },
    BreakEnded { session_id: String, at: u64 },
    Rated { session_id: String, record: RatingRecord },
    Completed { session_id: String, at: u64 },
}

impl JournalEvent {
    pub fn session_id(&self) -> &str {
        match self {
            JournalEvent::SessionCreated { session_id, .. }
            | JournalEvent::Served { session_id, .. }
            | JournalEvent::BreakStarted { session_id, .. }
            | JournalEvent::BreakEnded { session_id, .. }
            | JournalEvent::Rated { session_id, .. }
            | JournalEvent::Completed { session_id, .. } => session_id,
        }
    }
}

/// Parses JSON-lines journal text. Blank lines are skipped.
pub fn read_journal(reader: impl std::io::Read) -> Result<Vec<JournalEvent>, RatingError> {
    Ok(read_journal_numbered(reader)?.into_iter().map(|(_, ev)| ev).collect())
}

pub(crate) fn read_journal_numbered(reader: impl std::io::Read) -> Result<Vec<(usize, JournalEvent)>, RatingError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| RatingError::JournalCorrupt { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line)
            .map_err(|e| RatingError::JournalCorrupt { line: i + 1, message: e.to_string() })?;
        out.push((i + 1, ev));
    }
    Ok(out)
}

/// Append-only JSON-lines file. Each event is written with a single `write_all`.
#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    /// Opens (creating if needed) and returns the events already on disk with their line numbers.
    pub fn open(path: impl AsRef<Path>) -> Result<(Journal, Vec<(usize, JournalEvent)>), RatingError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| RatingError::Journal { path: path.display().to_string(), source };
        let events = match File::open(&path) {
            Ok(f) => read_journal_numbered(f)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(e)),
        };
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err)?;
        Ok((Journal { path, file }, events))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &JournalEvent) -> Result<(), RatingError> {
        let mut line = serde_json::to_string(event).expect("journal events serialize");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|source| RatingError::Journal { path: self.path.display().to_string(), source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_then_reopen_returns_events() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.jsonl");
        let (mut j, ev) = Journal::open(&p).unwrap();
        assert!(ev.is_empty());
        let a = JournalEvent::Served { session_id: "s0001".into(), case_id: "c1".into(), at: 5 };
        let b = JournalEvent::BreakEnded { session_id: "s0001".into(), at: 9 };
        j.append(&a).unwrap();
        j.append(&b).unwrap();
        drop(j);
        let (_, ev) = Journal::open(&p).unwrap();
        assert_eq!(ev, vec![(1, a), (2, b)]);
    }

    #[test]
    fn corrupt_line_is_reported_with_number() {
        let text = "{\"event\":\"completed\",\"session_id\":\"s\",\"at\":1}\n\nnot json\n";
        match read_journal(text.as_bytes()) {
            Err(RatingError::JournalCorrupt { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
