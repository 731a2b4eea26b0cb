//! Text-generation backends.
//!
//! Every pipeline prompt goes through [`complete`], which renders nothing
//! itself but times the backend call and records it in the run's ledger.

mod http;
mod mock;
mod prompt;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::debug;

use crate::accounting::{CallKind, CallLedger, Stage};

pub use http::{HttpLlm, HttpLlmOptions};
pub use mock::{Script, ScriptRule, ScriptedLlm};
pub use prompt::{render_prompt, PromptRequest, SamplingParams, TemplateId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("template `{template}` needs slot `{slot}`")]
    MissingSlot { template: TemplateId, slot: String },
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    BackendUnavailable { attempts: u32, message: String },
    #[error("backend rejected the request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    InvalidResponse(String),
    #[error("mock script exhausted at a `{template}` request")]
    ScriptExhausted { template: TemplateId },
    #[error("cache failure: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_units: u64,
    pub completion_units: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub usage: Usage,
    pub latency: Duration,
    pub backend_id: String,
    /// Served from the response cache without contacting the backend.
    #[serde(default)]
    pub cached: bool,
}

/// A text-generation backend. Implementations must be safe to share across
/// pipeline workers.
pub trait LlmBackend: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, req: &PromptRequest) -> Result<CompletionResponse, LlmError>;
}

impl<T: LlmBackend + ?Sized> LlmBackend for &T {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, req: &PromptRequest) -> Result<CompletionResponse, LlmError> {
        (**self).complete(req)
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for Box<T> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, req: &PromptRequest) -> Result<CompletionResponse, LlmError> {
        (**self).complete(req)
    }
}

/// Runs one request and records exactly one generation call for `stage`.
/// Failed calls are not recorded.
pub fn complete(
    llm: &dyn LlmBackend,
    req: &PromptRequest,
    ledger: &mut CallLedger,
    stage: Stage,
) -> Result<CompletionResponse, LlmError> {
    let started = Instant::now();
    let response = llm.complete(req)?;
    let elapsed = started.elapsed();
    ledger.record(stage, CallKind::Generation, elapsed, response.cached);
    debug!(
        stage = %stage,
        template = %req.template_id,
        cached = response.cached,
        response = %response.text,
        "completion"
    );
    Ok(response)
}
