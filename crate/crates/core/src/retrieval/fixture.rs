//! Offline search backend.
//!
//! A fixture directory holds one JSON file per query, named
//! `<sha256(query) as hex>.json`:
//!
//! ```json
//! {"query": "Sara Paxton Wikipedia",
//!  "results": [{"url": "...", "title": "...", "body": "...", "rank": 1}]}
//! ```
//!
//! Queries without a file return zero results.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{RetrievalError, SearchBackend, SearchResponse, SearchResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureFile {
    pub query: String,
    pub results: Vec<SearchResult>,
}

/// File stem under which results for `query` are stored.
pub fn query_key(query: &str) -> String {
    hex::encode(Sha256::digest(query.as_bytes()))
}

#[derive(Debug, Default)]
pub struct FixtureSearch {
    entries: HashMap<String, Vec<SearchResult>>,
    delay: Duration,
    calls: AtomicUsize,
}

impl FixtureSearch {
    pub fn in_memory<Q: Into<String>>(entries: impl IntoIterator<Item = (Q, Vec<SearchResult>)>) -> Self {
        Self {
            entries: entries
                .into_iter()
                .map(|(q, results)| (query_key(&q.into()), results))
                .collect(),
            ..Self::default()
        }
    }

    /// Loads every `*.json` file of `dir`.
    pub fn load(dir: &Path) -> Result<Self, RetrievalError> {
        let read_dir = std::fs::read_dir(dir)
            .map_err(|e| RetrievalError::Fixture(format!("{}: {e}", dir.display())))?;
        let mut entries = HashMap::new();
        for entry in read_dir {
            let path = entry
                .map_err(|e| RetrievalError::Fixture(e.to_string()))?
                .path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path)
                .map_err(|e| RetrievalError::Fixture(format!("{}: {e}", path.display())))?;
            let file: FixtureFile = serde_json::from_str(&text)
                .map_err(|e| RetrievalError::Fixture(format!("{}: {e}", path.display())))?;
            entries.insert(query_key(&file.query), file.results);
        }
        Ok(Self {
            entries,
            ..Self::default()
        })
    }

    /// Writes a fixture file for `query` into `dir`.
    pub fn write_fixture(dir: &Path, query: &str, results: &[SearchResult]) -> std::io::Result<()> {
        let file = FixtureFile {
            query: query.to_string(),
            results: results.to_vec(),
        };
        let json = serde_json::to_string_pretty(&file).map_err(std::io::Error::other)?;
        std::fs::write(dir.join(format!("{}.json", query_key(query))), json)
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl SearchBackend for FixtureSearch {
    fn id(&self) -> &str {
        "fixture"
    }

    fn search(&self, query: &str, k: usize) -> Result<SearchResponse, RetrievalError> {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut results = self.entries.get(&query_key(query)).cloned().unwrap_or_default();
        results.sort_by_key(|r| r.rank);
        results.truncate(k);
        Ok(SearchResponse {
            results,
            cached: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let results = vec![SearchResult::new(1, "https://a.org", "A", "Alpha. Beta.")];
        FixtureSearch::write_fixture(dir.path(), "what is a?", &results).unwrap();
        std::fs::write(dir.path().join("README.txt"), "ignored").unwrap();
        let backend = FixtureSearch::load(dir.path()).unwrap();
        assert_eq!(backend.search("what is a?", 10).unwrap().results, results);
        assert!(backend.search("unknown", 10).unwrap().results.is_empty());
        assert_eq!(backend.call_count(), 2);
    }

    #[test]
    fn schema_accepts_documented_field_names() {
        let json = r#"{"query":"q","results":[{"url":"u","title":"t","snippet_or_body":"b","rank":1}]}"#;
        let file: FixtureFile = serde_json::from_str(json).unwrap();
        assert_eq!(file.results[0].body, "b");
    }

    #[test]
    fn bad_fixture_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x.json"), "{not json").unwrap();
        assert!(matches!(FixtureSearch::load(dir.path()), Err(RetrievalError::Fixture(_))));
    }
}
