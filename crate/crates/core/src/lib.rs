//! Retrieval augmented correction of language model answers.
//!
//! An answer is decomposed into atomic facts, each fact is checked against
//! documents retrieved once for the question, wrong facts are corrected and
//! the answer is rewritten from the surviving facts. The crate also carries
//! the call accounting, evaluation metrics and response cache used around
//! the pipeline.

pub mod accounting;
pub mod cache;
pub mod config;
pub mod eval;
pub mod llm;
pub mod pipeline;
pub mod retrieval;
pub mod types;
pub mod units;

pub use accounting::{CallLedger, Method, Stage};
pub use config::{validate_config, ConfigError, CorrectionStrategy, NmPolicy, PipelineConfig};
pub use llm::{LlmBackend, LlmError, ScriptedLlm};
pub use pipeline::{run_pipeline, AtomicFact, Backends, FactSet, Label, PipelineError, StageFailure};
pub use retrieval::{DocumentSet, FixtureSearch, SearchBackend, SearchResult};
pub use types::{GenerationOutput, Mode, RunRecord, TaskInput};
