//! Domain values shared across the pipeline.

use serde::{Deserialize, Serialize};

use crate::accounting::{CallLedger, Stage};
use crate::config::PipelineConfig;
use crate::pipeline::FactSet;
use crate::retrieval::DocumentSet;

/// Version tag written into every serialized [`RunRecord`].
pub const RUN_RECORD_SCHEMA_VERSION: u32 = 1;

/// Dataset flavour; decides query building, post-processing and prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Biography-style long-form generation.
    #[serde(alias = "LongForm", alias = "biography", alias = "longform")]
    LongForm,
    /// TruthfulQA-style short answers.
    #[serde(alias = "ShortQA", alias = "truthfulqa", alias = "shortqa")]
    ShortQa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInput {
    pub id: String,
    pub question: String,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_hint: Option<String>,
}

impl TaskInput {
    pub fn new(id: impl Into<String>, question: impl Into<String>, mode: Mode) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            mode,
            entity_hint: None,
        }
    }

    pub fn with_entity(mut self, entity: impl Into<String>) -> Self {
        self.entity_hint = Some(entity.into());
        self
    }

    /// Checks the per-record invariants (id uniqueness is a corpus concern).
    pub fn check(&self) -> Result<(), String> {
        if self.question.trim().is_empty() {
            return Err(format!("task `{}` has an empty question", self.id));
        }
        Ok(())
    }
}

/// A model answer, either the plain baseline or a RAG-conditioned one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub text: String,
    pub produced_with_rag: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_docs: Option<DocumentSet>,
}

impl GenerationOutput {
    pub fn plain(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            produced_with_rag: false,
            source_docs: None,
        }
    }

    pub fn with_rag(text: impl Into<String>, docs: DocumentSet) -> Self {
        Self {
            text: text.into(),
            produced_with_rag: true,
            source_docs: Some(docs),
        }
    }
}

/// Full audit trail of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub input: TaskInput,
    pub baseline_output: GenerationOutput,
    /// Documents after post-processing, as used by verification and correction.
    pub documents: DocumentSet,
    /// Facts after verification, correction and assembly, dispositions included.
    pub facts: FactSet,
    pub final_output: String,
    /// Stages entered, in order.
    pub stages: Vec<Stage>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub ledger: CallLedger,
    pub config_snapshot: PipelineConfig,
}
