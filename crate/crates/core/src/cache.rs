//! Content-addressed on-disk cache for model completions and search results.
//!
//! Entries live at `<root>/<k[0..2]>/<k[2..4]>/<k>.json`, where `k` is the
//! SHA-256 of the backend id and the serialized request. Writes go to a
//! temporary file that is renamed into place, and a readable entry is never
//! rewritten. Unreadable entries count as misses and are replaced.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{debug, warn};

use crate::llm::{CompletionResponse, LlmBackend, LlmError, PromptRequest};
use crate::retrieval::{RetrievalError, SearchBackend, SearchResponse, SearchResult};

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache io at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt cache entry {path}")]
    Corrupt { path: PathBuf },
}

/// One stored response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    /// Serialized response.
    pub value: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

/// A value served by [`DiskCache::get_or_call`].
#[derive(Debug, Clone, PartialEq)]
pub struct Fetched<T> {
    pub value: T,
    pub hit: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub entries: usize,
    pub corrupt: usize,
    pub bytes: u64,
}

#[derive(Debug, Clone)]
pub struct DiskCache {
    root: PathBuf,
    bypass: bool,
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CacheError + '_ {
    move |source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl DiskCache {
    /// Opens (creating if needed) a cache rooted at `root`. With `bypass`
    /// set every lookup calls through, while new entries are still stored.
    pub fn open(root: impl Into<PathBuf>, bypass: bool) -> Result<Self, CacheError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self { root, bypass })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Hex SHA-256 over the backend id and the request bytes.
    pub fn key(backend_id: &str, request: &[u8]) -> String {
        let mut hasher = Sha256::new();
        hasher.update(backend_id.as_bytes());
        hasher.update([0u8]);
        hasher.update(request);
        hex::encode(hasher.finalize())
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        let (a, b) = (key.get(0..2).unwrap_or("__"), key.get(2..4).unwrap_or("__"));
        self.root.join(a).join(b).join(format!("{key}.json"))
    }

    /// Reads an entry. `Ok(None)` when absent.
    pub fn get(&self, key: &str) -> Result<Option<CacheEntry>, CacheError> {
        let path = self.path_for(key);
        let bytes = match fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path)(e)),
        };
        match serde_json::from_slice::<CacheEntry>(&bytes) {
            Ok(entry) if entry.key == key => Ok(Some(entry)),
            _ => Err(CacheError::Corrupt { path }),
        }
    }

    /// Stores `value` under `key` unless a readable entry is already there.
    pub fn put(&self, key: &str, value: &str) -> Result<(), CacheError> {
        match self.get(key) {
            Ok(Some(_)) => Ok(()),
            Ok(None) | Err(CacheError::Corrupt { .. }) => self.write(key, value),
            Err(e) => Err(e),
        }
    }

    fn write(&self, key: &str, value: &str) -> Result<(), CacheError> {
        let path = self.path_for(key);
        let dir = path.parent().unwrap_or(&self.root);
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or_default();
        let entry = CacheEntry {
            key: key.to_string(),
            value: value.to_string(),
            created_at,
        };
        let body = serde_json::to_vec(&entry).expect("cache entries serialize");
        let temp = dir.join(format!(
            ".{key}.{}.{}.tmp",
            std::process::id(),
            TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        fs::write(&temp, body).map_err(io_err(&temp))?;
        fs::rename(&temp, &path).map_err(|e| {
            let _ = fs::remove_file(&temp);
            io_err(&path)(e)
        })
    }

    /// Returns the cached value for `key`, or runs `thunk` and stores its
    /// result. Entries that no longer decode as `T` are treated as misses
    /// and replaced. Cache IO failures are logged and never fail the call.
    pub fn get_or_call<T, E>(&self, key: &str, thunk: impl FnOnce() -> Result<T, E>) -> Result<Fetched<T>, E>
    where
        T: Serialize + DeserializeOwned,
    {
        let mut corrupt = false;
        if !self.bypass {
            match self.get(key) {
                Ok(Some(entry)) => match serde_json::from_str(&entry.value) {
                    Ok(value) => return Ok(Fetched { value, hit: true }),
                    Err(_) => corrupt = true,
                },
                Ok(None) => {}
                Err(CacheError::Corrupt { path }) => {
                    warn!(path = %path.display(), "corrupt cache entry; refetching");
                    corrupt = true;
                }
                Err(e) => warn!("{e}"),
            }
        }
        let value = thunk()?;
        let serialized = serde_json::to_string(&value).expect("cached values serialize");
        let stored = if corrupt {
            self.write(key, &serialized)
        } else {
            self.put(key, &serialized)
        };
        if let Err(e) = stored {
            warn!("{e}");
        }
        debug!(key, "cache miss stored");
        Ok(Fetched { value, hit: false })
    }

    /// Paths of every entry file, sorted.
    pub fn entry_paths(&self) -> Result<Vec<PathBuf>, CacheError> {
        let mut out = Vec::new();
        let mut stack = vec![self.root.clone()];
        while let Some(dir) = stack.pop() {
            for item in fs::read_dir(&dir).map_err(io_err(&dir))? {
                let path = item.map_err(io_err(&dir))?.path();
                if path.is_dir() {
                    stack.push(path);
                } else if path.extension().is_some_and(|e| e == "json") {
                    out.push(path);
                }
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn stats(&self) -> Result<CacheStats, CacheError> {
        let mut stats = CacheStats::default();
        for path in self.entry_paths()? {
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            stats.bytes += bytes.len() as u64;
            match serde_json::from_slice::<CacheEntry>(&bytes) {
                Ok(_) => stats.entries += 1,
                Err(_) => stats.corrupt += 1,
            }
        }
        Ok(stats)
    }
}

/// Caches completions of an inner model backend.
pub struct CachedLlm<L> {
    inner: L,
    cache: DiskCache,
}

impl<L: LlmBackend> CachedLlm<L> {
    pub fn new(inner: L, cache: DiskCache) -> Self {
        Self { inner, cache }
    }

    pub fn inner(&self) -> &L {
        &self.inner
    }
}

impl<L: LlmBackend> LlmBackend for CachedLlm<L> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, req: &PromptRequest) -> Result<CompletionResponse, LlmError> {
        let request = serde_json::to_vec(req).map_err(|e| LlmError::Cache(e.to_string()))?;
        let key = DiskCache::key(self.inner.id(), &request);
        let fetched = self.cache.get_or_call(&key, || self.inner.complete(req))?;
        let mut response = fetched.value;
        response.cached = fetched.hit;
        Ok(response)
    }
}

/// Caches results of an inner search backend.
pub struct CachedSearch<S> {
    inner: S,
    cache: DiskCache,
}

impl<S: SearchBackend> CachedSearch<S> {
    pub fn new(inner: S, cache: DiskCache) -> Self {
        Self { inner, cache }
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: SearchBackend> SearchBackend for CachedSearch<S> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn search(&self, query: &str, k: usize) -> Result<SearchResponse, RetrievalError> {
        let request = serde_json::to_vec(&(query, k)).expect("query serializes");
        let key = DiskCache::key(self.inner.id(), &request);
        let fetched = self
            .cache
            .get_or_call::<Vec<SearchResult>, _>(&key, || self.inner.search(query, k).map(|r| r.results))?;
        Ok(SearchResponse {
            results: fetched.value,
            cached: fetched.hit,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accounting::{CallKind, CallLedger, Stage};
    use crate::llm::{self, ScriptedLlm, TemplateId};
    use crate::retrieval::{retrieve, FixtureSearch};

    fn req() -> PromptRequest {
        PromptRequest::new(TemplateId::PlainAnswer).slot("question", "Who?")
    }

    #[test]
    fn second_request_hits_and_skips_backend() {
        let dir = tempfile::tempdir().unwrap();
        let cached = CachedLlm::new(ScriptedLlm::sequence(["first"]), DiskCache::open(dir.path(), false).unwrap());
        let mut ledger = CallLedger::new();
        let a = llm::complete(&cached, &req(), &mut ledger, Stage::Generate).unwrap();
        let b = llm::complete(&cached, &req(), &mut ledger, Stage::Generate).unwrap();
        assert_eq!((a.text.as_str(), a.cached), ("first", false));
        assert_eq!((b.text.as_str(), b.cached), ("first", true));
        assert_eq!(cached.inner().call_count(), 1);
        assert_eq!(ledger.backend_calls(CallKind::Generation), 1);
        assert_eq!(ledger.cache_hits(), 1);
    }

    #[test]
    fn bypass_calls_through() {
        let dir = tempfile::tempdir().unwrap();
        let warm = CachedLlm::new(ScriptedLlm::sequence(["one"]), DiskCache::open(dir.path(), false).unwrap());
        warm.complete(&req()).unwrap();
        let bypass = CachedLlm::new(ScriptedLlm::sequence(["two"]), DiskCache::open(dir.path(), true).unwrap());
        let r = bypass.complete(&req()).unwrap();
        assert_eq!((r.text.as_str(), r.cached), ("two", false));
        assert_eq!(bypass.inner().call_count(), 1);
        // the stored entry is not replaced
        let again = CachedLlm::new(ScriptedLlm::sequence(Vec::<String>::new()), DiskCache::open(dir.path(), false).unwrap());
        assert_eq!(again.complete(&req()).unwrap().text, "one");
    }

    #[test]
    fn truncated_entry_is_refetched_and_rewritten() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path(), false).unwrap();
        let first = CachedLlm::new(ScriptedLlm::sequence(["v1"]), cache.clone());
        first.complete(&req()).unwrap();
        let path = cache.entry_paths().unwrap().pop().unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert_eq!(cache.stats().unwrap().corrupt, 1);

        let second = CachedLlm::new(ScriptedLlm::sequence(["v2"]), cache.clone());
        let r = second.complete(&req()).unwrap();
        assert_eq!((r.text.as_str(), r.cached), ("v2", false));
        assert_eq!(second.inner().call_count(), 1);
        let stats = cache.stats().unwrap();
        assert_eq!((stats.entries, stats.corrupt), (1, 0));
        assert!(second.complete(&req()).unwrap().cached);
    }

    #[test]
    fn layout_is_two_level_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path(), false).unwrap();
        let key = DiskCache::key("m", b"r");
        assert_eq!(key.len(), 64);
        let path = cache.path_for(&key);
        let rel = path.strip_prefix(dir.path()).unwrap();
        let parts: Vec<_> = rel.iter().map(|p| p.to_string_lossy().into_owned()).collect();
        assert_eq!(parts, vec![key[0..2].to_string(), key[2..4].to_string(), format!("{key}.json")]);
        assert_ne!(DiskCache::key("m", b"r"), DiskCache::key("n", b"r"));
    }

    #[test]
    fn errors_are_not_cached() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path(), false).unwrap();
        let empty = CachedLlm::new(ScriptedLlm::sequence(Vec::<String>::new()), cache.clone());
        assert!(empty.complete(&req()).is_err());
        assert_eq!(cache.stats().unwrap().entries, 0);
    }

    #[test]
    fn cached_search_counts_one_logical_call() {
        let dir = tempfile::tempdir().unwrap();
        let fixture = FixtureSearch::in_memory([(
            "q".to_string(),
            vec![SearchResult::new(1, "https://a.org", "A", "Body.")],
        )]);
        let cached = CachedSearch::new(fixture, DiskCache::open(dir.path(), false).unwrap());
        for _ in 0..2 {
            let mut ledger = CallLedger::new();
            let results = retrieve("q", &cached, 5, &mut ledger).unwrap();
            assert_eq!(results.len(), 1);
            assert_eq!(ledger.retrieval_calls(), 1);
        }
        assert_eq!(cached.inner().call_count(), 1);
    }
}
