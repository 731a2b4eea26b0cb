//! Retrieval of supporting documents and their post-processing into a
//! compact, relevant context.

mod compress;
mod fixture;
mod http;
mod rerank;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::{CallKind, CallLedger, Stage};
use crate::types::{Mode, TaskInput};
use crate::units::count_units;

pub use compress::{compress, CompressOptions};
pub use fixture::{query_key, FixtureFile, FixtureSearch};
pub use http::{html_to_text, HttpSearch, HttpSearchOptions};
pub use rerank::{rerank_longform, rerank_shortqa, sentence_count, url_host};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("long-form input `{0}` has no entity hint to build a query from")]
    MissingEntity(String),
    #[error("search returned no usable results")]
    EmptyResults,
    #[error("search depth must be at least 1")]
    InvalidDepth,
    #[error("search backend unavailable after {attempts} attempt(s): {message}")]
    BackendUnavailable { attempts: u32, message: String },
    #[error("malformed search response: {0}")]
    InvalidResponse(String),
    #[error("fixture error: {0}")]
    Fixture(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub url: String,
    pub title: String,
    #[serde(alias = "snippet_or_body", alias = "snippet")]
    pub body: String,
    pub rank: u32,
}

impl SearchResult {
    pub fn new(rank: u32, url: impl Into<String>, title: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            title: title.into(),
            body: body.into(),
            rank,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchResponse {
    pub results: Vec<SearchResult>,
    /// Served from the response cache.
    pub cached: bool,
}

pub trait SearchBackend: Send + Sync {
    fn id(&self) -> &str;

    /// Returns up to `k` results with already-extracted text.
    fn search(&self, query: &str, k: usize) -> Result<SearchResponse, RetrievalError>;
}

impl<T: SearchBackend + ?Sized> SearchBackend for &T {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn search(&self, query: &str, k: usize) -> Result<SearchResponse, RetrievalError> {
        (**self).search(query, k)
    }
}

impl<T: SearchBackend + ?Sized> SearchBackend for Box<T> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn search(&self, query: &str, k: usize) -> Result<SearchResponse, RetrievalError> {
        (**self).search(query, k)
    }
}

/// What was done to a processed block on its way into the context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Transform {
    RemovedSection { name: String },
    Truncated { from_units: usize, to_units: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessedBlock {
    pub text: String,
    pub source_url: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transforms: Vec<Transform>,
}

/// Raw search results and the post-processed context derived from them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DocumentSet {
    pub raw: Vec<SearchResult>,
    pub processed: Vec<ProcessedBlock>,
    pub total_units: usize,
}

impl DocumentSet {
    pub fn new(raw: Vec<SearchResult>, processed: Vec<ProcessedBlock>) -> Self {
        let total_units = processed.iter().map(|b| count_units(&b.text)).sum();
        Self {
            raw,
            processed,
            total_units,
        }
    }

    /// Context used in prompts: processed blocks separated by blank lines.
    pub fn passage(&self) -> String {
        self.processed
            .iter()
            .map(|b| b.text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    pub fn is_empty(&self) -> bool {
        self.processed.iter().all(|b| b.text.trim().is_empty())
    }
}

/// Search query for a task: `"{entity} Wikipedia"` for long-form inputs, the
/// question itself for short QA.
pub fn build_query(input: &TaskInput) -> Result<String, RetrievalError> {
    match input.mode {
        Mode::LongForm => match input.entity_hint.as_deref().map(str::trim) {
            Some(entity) if !entity.is_empty() => Ok(format!("{entity} Wikipedia")),
            _ => Err(RetrievalError::MissingEntity(input.id.clone())),
        },
        Mode::ShortQa => Ok(input.question.clone()),
    }
}

/// Runs one search and records exactly one retrieval call, also when the
/// backend answers with zero hits.
pub fn retrieve(
    query: &str,
    backend: &dyn SearchBackend,
    k: usize,
    ledger: &mut CallLedger,
) -> Result<Vec<SearchResult>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidDepth);
    }
    let started = Instant::now();
    let response = backend.search(query, k)?;
    ledger.record(Stage::Retrieve, CallKind::Retrieval, started.elapsed(), response.cached);
    let mut results = response.results;
    results.sort_by_key(|r| r.rank);
    results.truncate(k);
    if results.is_empty() {
        return Err(RetrievalError::EmptyResults);
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(n: u32) -> Vec<SearchResult> {
        (1..=n)
            .map(|i| SearchResult::new(i, format!("https://example.org/{i}"), format!("t{i}"), "Body. More."))
            .collect()
    }

    #[test]
    fn long_form_query_uses_entity() {
        let input = TaskInput::new("1", "Tell me a bio of Sara Paxton.", Mode::LongForm).with_entity("Sara Paxton");
        assert_eq!(build_query(&input).unwrap(), "Sara Paxton Wikipedia");
    }

    #[test]
    fn short_qa_query_is_question_verbatim() {
        let input = TaskInput::new("1", "What is the smallest country?", Mode::ShortQa);
        assert_eq!(build_query(&input).unwrap(), "What is the smallest country?");
    }

    #[test]
    fn long_form_without_entity_fails() {
        let input = TaskInput::new("7", "Tell me a bio.", Mode::LongForm);
        assert_eq!(build_query(&input), Err(RetrievalError::MissingEntity("7".into())));
    }

    #[test]
    fn retrieve_truncates_and_counts_once() {
        let backend = FixtureSearch::in_memory([("q", docs(12))]);
        let mut ledger = CallLedger::new();
        let got = retrieve("q", &backend, 10, &mut ledger).unwrap();
        assert_eq!(got.iter().map(|r| r.rank).collect::<Vec<_>>(), (1..=10).collect::<Vec<_>>());
        assert_eq!(ledger.retrieval_calls(), 1);
        retrieve("q", &backend, 30, &mut ledger).unwrap();
        assert_eq!(ledger.retrieval_calls(), 2);
    }

    #[test]
    fn empty_results_still_count_the_call() {
        let backend = FixtureSearch::in_memory::<&str>([]);
        let mut ledger = CallLedger::new();
        assert_eq!(retrieve("nothing", &backend, 5, &mut ledger), Err(RetrievalError::EmptyResults));
        assert_eq!(ledger.retrieval_calls(), 1);
        assert_eq!(retrieve("nothing", &backend, 0, &mut ledger), Err(RetrievalError::InvalidDepth));
    }

    #[test]
    fn retrieve_orders_by_rank() {
        let mut shuffled = docs(4);
        shuffled.reverse();
        let backend = FixtureSearch::in_memory([("q", shuffled)]);
        let got = retrieve("q", &backend, 2, &mut CallLedger::new()).unwrap();
        assert_eq!(got[0].rank, 1);
        assert_eq!(got[1].rank, 2);
    }
}
