//! Append-only result store: one JSON record per line.
//!
//! Each append opens the file in append mode and issues a single write of the whole
//! line, so concurrent appenders never interleave inside a record. Readers ignore a
//! trailing line without its newline, which is an append still in flight.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::DecisionVector;
use crate::simulation::ResultRecord;

#[derive(Debug, Clone)]
pub struct ResultStore {
    path: PathBuf,
}

impl ResultStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append<T: Serialize>(&self, record: &T) -> Result<()> {
        let mut line = serde_json::to_string(record).map_err(|e| Error::Store(e.to_string()))?;
        line.push('\n');
        let mut file =
            OpenOptions::new().create(true).append(true).open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        file.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))
    }

    /// Every complete record; a missing file reads as empty.
    pub fn read<T: DeserializeOwned>(&self) -> Result<Vec<T>> {
        let text = match std::fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&self.path, e)),
        };
        let complete = match text.rfind('\n') {
            Some(i) => &text[..=i],
            None => "",
        };
        complete
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse {
                    file: self.path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect()
    }

    /// The first stored record for this decision and seed.
    pub fn find(&self, decision: &DecisionVector, seed: u64) -> Result<Option<ResultRecord>> {
        Ok(self.read::<ResultRecord>()?.into_iter().find(|r| r.seed == seed && r.decision == *decision))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_tail_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let store = ResultStore::new(dir.path().join("r.jsonl"));
        assert!(store.read::<Vec<f64>>().unwrap().is_empty());
        store.append(&vec![1.0, 0.1]).unwrap();
        let mut f = OpenOptions::new().append(true).open(store.path()).unwrap();
        f.write_all(b"[2.0,").unwrap();
        assert_eq!(store.read::<Vec<f64>>().unwrap(), vec![vec![1.0, 0.1]]);
    }

    #[test]
    fn corrupt_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let store = ResultStore::new(dir.path().join("r.jsonl"));
        std::fs::write(store.path(), "[1]\nnot json\n").unwrap();
        assert!(matches!(store.read::<Vec<f64>>(), Err(Error::Parse { line: 2, .. })));
    }
}
