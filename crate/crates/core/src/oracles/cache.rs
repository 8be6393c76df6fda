//! Append-only decision cache keyed by `(oracle id, sha256(prompt))`.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::OracleError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub oracle: String,
    pub key: String,
    pub prompt: String,
    pub response: String,
    /// Parsed decision; `null` when the response never parsed.
    pub decision: serde_json::Value,
    pub ts: String,
}

#[derive(Debug, Default)]
pub struct DecisionCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<(String, String), CacheEntry>>,
    writer: Mutex<Option<BufWriter<File>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl DecisionCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a JSONL cache file. Existing entries are loaded;
    /// new ones are appended. When a key repeats in the file the first
    /// entry wins.
    pub fn open(path: &Path) -> Result<Self, OracleError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| OracleError::Cache(e.to_string()))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| OracleError::Cache(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry = serde_json::from_str(&line)
                    .map_err(|_| OracleError::CacheCorrupt { line: i + 1 })?;
                entries
                    .entry((entry.oracle.clone(), entry.key.clone()))
                    .or_insert(entry);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| OracleError::Cache(e.to_string()))?;
        Ok(Self {
            path: Some(path.to_owned()),
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(BufWriter::new(file))),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn key(prompt: &str) -> String {
        crate::sha256_hex(prompt.as_bytes())
    }

    pub fn lookup(&self, oracle: &str, prompt: &str) -> Option<CacheEntry> {
        let key = Self::key(prompt);
        let found = self
            .entries
            .read()
            .expect("cache lock")
            .get(&(oracle.to_owned(), key))
            .cloned();
        match found {
            Some(e) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                Some(e)
            }
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    /// Records a decision. An existing entry for the same key is kept.
    pub fn record(
        &self,
        oracle: &str,
        prompt: &str,
        response: &str,
        decision: serde_json::Value,
    ) -> Result<CacheEntry, OracleError> {
        let entry = CacheEntry {
            oracle: oracle.to_owned(),
            key: Self::key(prompt),
            prompt: prompt.to_owned(),
            response: response.to_owned(),
            decision,
            ts: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        };
        let mut writer = self.writer.lock().expect("cache writer");
        let mut entries = self.entries.write().expect("cache lock");
        let id = (entry.oracle.clone(), entry.key.clone());
        if let Some(existing) = entries.get(&id) {
            return Ok(existing.clone());
        }
        if let Some(w) = writer.as_mut() {
            serde_json::to_writer(&mut *w, &entry).map_err(|e| OracleError::Cache(e.to_string()))?;
            w.write_all(b"\n").map_err(|e| OracleError::Cache(e.to_string()))?;
            w.flush().map_err(|e| OracleError::Cache(e.to_string()))?;
        }
        entries.insert(id, entry.clone());
        Ok(entry)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persists_and_replays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let c = DecisionCache::open(&path).unwrap();
            assert!(c.lookup("m", "prompt").is_none());
            c.record("m", "prompt", "Yes", serde_json::json!(1)).unwrap();
            // first entry wins
            c.record("m", "prompt", "No", serde_json::json!(0)).unwrap();
        }
        let c = DecisionCache::open(&path).unwrap();
        let e = c.lookup("m", "prompt").unwrap();
        assert_eq!(e.decision, serde_json::json!(1));
        assert_eq!(e.response, "Yes");
        assert_eq!(e.key, DecisionCache::key("prompt"));
        assert_eq!(c.hits(), 1);
        assert!(c.lookup("other-oracle", "prompt").is_none());
        let lines = std::fs::read_to_string(&path).unwrap();
        assert_eq!(lines.lines().count(), 1);
    }

    #[test]
    fn corrupt_line_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        std::fs::write(&path, "{\"oracle\":\"m\"}\n").unwrap();
        assert!(matches!(
            DecisionCache::open(&path),
            Err(OracleError::CacheCorrupt { line: 1 })
        ));
    }
}
