//! Append-only record/replay store keyed by request fingerprint.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub response: String,
    pub timestamp: String,
    pub provider: String,
}

/// In-memory fingerprint -> response map loaded from a `*.cassette.jsonl`
/// file. Inserts are collision-checked: re-recording a fingerprint with a
/// different response is an error.
#[derive(Clone, Debug, Default)]
pub struct Cassette {
    entries: BTreeMap<String, CassetteEntry>,
}

impl Cassette {
    pub fn new() -> Self {
        Cassette::default()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut cassette = Cassette::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry = serde_json::from_str(&line).map_err(|e| {
                Error::schema(path.display().to_string(), format!("line {}: {e}", idx + 1))
            })?;
            cassette.insert(entry)?;
        }
        Ok(cassette)
    }

    pub fn get(&self, fingerprint: &str) -> Option<&CassetteEntry> {
        self.entries.get(fingerprint)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Returns true when the entry was new, false for an identical duplicate.
    pub fn insert(&mut self, entry: CassetteEntry) -> Result<bool> {
        if let Some(existing) = self.entries.get(&entry.fingerprint) {
            if existing.response != entry.response {
                return Err(Error::CassetteConflict {
                    fingerprint: entry.fingerprint.clone(),
                });
            }
            return Ok(false);
        }
        self.entries.insert(entry.fingerprint.clone(), entry);
        Ok(true)
    }

    pub fn entries(&self) -> impl Iterator<Item = &CassetteEntry> {
        self.entries.values()
    }
}

/// Append-only writer; each entry is flushed as one JSON line so a crashed
/// recording session leaves a usable prefix.
#[derive(Debug)]
pub struct CassetteWriter {
    path: PathBuf,
    file: File,
    loaded: Cassette,
}

impl CassetteWriter {
    /// Opens for appending; existing entries are loaded so repeated requests
    /// are served without re-recording.
    pub fn open(path: &Path) -> Result<Self> {
        let loaded = if path.exists() {
            Cassette::load(path)?
        } else {
            Cassette::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(CassetteWriter {
            path: path.to_path_buf(),
            file,
            loaded,
        })
    }

    pub fn get(&self, fingerprint: &str) -> Option<&CassetteEntry> {
        self.loaded.get(fingerprint)
    }

    pub fn append(&mut self, entry: CassetteEntry) -> Result<()> {
        if !self.loaded.insert(entry.clone())? {
            return Ok(()); // identical duplicate, nothing to write
        }
        let line = serde_json::to_string(&entry)
            .map_err(|e| Error::schema(self.path.display().to_string(), e.to_string()))?;
        writeln!(self.file, "{line}").map_err(|e| Error::io(self.path.display().to_string(), e))?;
        self.file
            .flush()
            .map_err(|e| Error::io(self.path.display().to_string(), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(fp: &str, response: &str) -> CassetteEntry {
        CassetteEntry {
            fingerprint: fp.into(),
            response: response.into(),
            timestamp: "0".into(),
            provider: "test".into(),
        }
    }

    #[test]
    fn round_trip_and_collision_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.cassette.jsonl");
        {
            let mut w = CassetteWriter::open(&path).unwrap();
            w.append(entry("a", "one")).unwrap();
            w.append(entry("b", "two")).unwrap();
            w.append(entry("a", "one")).unwrap(); // identical dup is fine
            assert!(matches!(
                w.append(entry("a", "different")),
                Err(Error::CassetteConflict { .. })
            ));
        }
        let loaded = Cassette::load(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.get("a").unwrap().response, "one");
    }

    #[test]
    fn malformed_line_names_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"fingerprint\": \"a\"\n").unwrap();
        match Cassette::load(&path) {
            Err(Error::Schema { detail, .. }) => assert!(detail.contains("line 1")),
            other => panic!("expected schema error, got {other:?}"),
        }
    }
}
