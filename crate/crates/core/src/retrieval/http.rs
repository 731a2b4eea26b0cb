//! Live search backend.
//!
//! Issues `GET {endpoint}?q=<query>&num=<k>` (plus `key=<api key>` when one
//! is configured) and accepts either the fixture schema
//! (`{"results": [{url, title, body, rank}]}`) or a Google Custom Search
//! style reply (`{"items": [{link, title, snippet}]}`). HTML bodies are
//! reduced to text before they reach the pipeline.

use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde::Deserialize;
use tracing::warn;

use super::{RetrievalError, SearchBackend, SearchResponse, SearchResult};

#[derive(Debug, Clone)]
pub struct HttpSearchOptions {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
}

impl HttpSearchOptions {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
        }
    }
}

pub struct HttpSearch {
    id: String,
    options: HttpSearchOptions,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct RawReply {
    #[serde(default)]
    results: Option<Vec<SearchResult>>,
    #[serde(default)]
    items: Option<Vec<RawItem>>,
}

#[derive(Deserialize)]
struct RawItem {
    link: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    snippet: String,
}

impl HttpSearch {
    pub fn new(options: HttpSearchOptions) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(options.timeout))
            .http_status_as_error(false)
            .build();
        Self {
            id: format!("http:{}", options.endpoint),
            agent: ureq::Agent::new_with_config(config),
            options,
        }
    }

    fn fetch(&self, query: &str, k: usize) -> Result<Result<Vec<SearchResult>, RetrievalError>, String> {
        let mut request = self
            .agent
            .get(&self.options.endpoint)
            .query("q", query)
            .query("num", k.to_string());
        if let Some(key) = &self.options.api_key {
            request = request.query("key", key);
        }
        let mut response = request.call().map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(format!("status {status}"));
        }
        if !(200..300).contains(&status) {
            return Ok(Err(RetrievalError::InvalidResponse(format!("status {status}"))));
        }
        let reply: RawReply = match response.body_mut().read_json() {
            Ok(r) => r,
            Err(e) => return Ok(Err(RetrievalError::InvalidResponse(e.to_string()))),
        };
        let results = match (reply.results, reply.items) {
            (Some(results), _) => results,
            (None, Some(items)) => items
                .into_iter()
                .enumerate()
                .map(|(i, item)| SearchResult::new(i as u32 + 1, item.link, item.title, item.snippet))
                .collect(),
            (None, None) => Vec::new(),
        };
        Ok(Ok(results
            .into_iter()
            .map(|mut r| {
                if r.body.contains('<') {
                    r.body = html_to_text(&r.body);
                }
                r
            })
            .collect()))
    }
}

impl SearchBackend for HttpSearch {
    fn id(&self) -> &str {
        &self.id
    }

    fn search(&self, query: &str, k: usize) -> Result<SearchResponse, RetrievalError> {
        let attempts = self.options.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = self.options.backoff_base * 2u32.saturating_pow(attempt - 1);
                warn!(attempt, error = %last_error, "retrying search");
                std::thread::sleep(backoff);
            }
            match self.fetch(query, k) {
                Ok(outcome) => {
                    return outcome.map(|results| SearchResponse {
                        results,
                        cached: false,
                    })
                }
                Err(message) => last_error = message,
            }
        }
        Err(RetrievalError::BackendUnavailable {
            attempts,
            message: last_error,
        })
    }
}

static DROPPED_ELEMENTS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<(script|style|noscript)\b[^>]*>.*?</(script|style|noscript)\s*>").unwrap());
static BLOCK_TAGS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)<\s*(br|/p|/div|/li|/tr|/h[1-6]|p|div|li|h[1-6])\b[^>]*>").unwrap()
});
static ANY_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<[^>]*>").unwrap());
static SPACES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[ \t\u{a0}]+").unwrap());

/// Minimal HTML-to-text reduction: drops scripts and styles, turns block
/// elements into line breaks, strips remaining tags and decodes the common
/// entities.
pub fn html_to_text(html: &str) -> String {
    let text = DROPPED_ELEMENTS.replace_all(html, "");
    let text = BLOCK_TAGS.replace_all(&text, "\n");
    let text = ANY_TAG.replace_all(&text, "");
    let text = text
        .replace("&nbsp;", " ")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&amp;", "&");
    let text = SPACES.replace_all(&text, " ");
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}
