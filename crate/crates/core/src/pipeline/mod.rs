//! Retrieval augmented correction of a model answer.
//!
//! A run retrieves once, generates (conditioned on the documents when RAG is
//! on), extracts atomic facts, optionally verifies them, corrects them,
//! assembles the surviving set and revises the answer from it.
//!
//! ```text
//! retrieve -> post-process -> generate -> extract -> [verify] -> correct -> assemble -> revise
//! ```

mod assemble;
mod correct;
mod extract;
mod facts;
mod revise;
mod verify;

use std::fmt;
use std::time::Instant;

use thiserror::Error;
use tracing::{info, warn};

use crate::accounting::{CallLedger, Stage};
use crate::config::{ConfigError, CorrectionStrategy, OutputLimits, PipelineConfig};
use crate::llm::{self, LlmBackend, LlmError, PromptRequest, TemplateId};
use crate::retrieval::{
    build_query, compress, rerank_longform, rerank_shortqa, retrieve, CompressOptions, DocumentSet,
    RetrievalError, SearchBackend,
};
use crate::types::{GenerationOutput, Mode, RunRecord, TaskInput, RUN_RECORD_SCHEMA_VERSION};

pub use assemble::assemble;
pub use correct::{correct_fact, normalize_whitespace, CorrectionMode};
pub use extract::{extract_facts, parse_fact_lines};
pub use facts::{AtomicFact, Disposition, FactSet, Label};
pub use revise::{is_no_comment, revise, NO_COMMENT};
pub use verify::{format_statements, parse_verification, verify_facts, VerificationParse};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("model returned an empty answer")]
    EmptyGeneration,
    #[error("extraction produced no facts")]
    EmptyExtraction,
    #[error("no retrieved documents to check against")]
    NoDocuments,
    #[error("fact {index} is False but has no correction")]
    UncorrectedFalse { index: usize },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// A pipeline error tagged with the stage it happened in.
#[derive(Debug, Clone, PartialEq)]
pub struct StageFailure {
    pub stage: Stage,
    pub error: PipelineError,
}

impl fmt::Display for StageFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, StageFailure>;
}

impl<T, E: Into<PipelineError>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, StageFailure> {
        self.map_err(|e| StageFailure {
            stage,
            error: e.into(),
        })
    }
}

/// Per-run state: the model, the call ledger and collected warnings.
pub struct RunContext<'a> {
    pub llm: &'a dyn LlmBackend,
    pub ledger: CallLedger,
    pub warnings: Vec<String>,
    pub top_p: f64,
    pub limits: OutputLimits,
}

impl<'a> RunContext<'a> {
    pub fn new(llm: &'a dyn LlmBackend, cfg: &PipelineConfig) -> Self {
        Self {
            llm,
            ledger: CallLedger::new(),
            warnings: Vec::new(),
            top_p: cfg.top_p(),
            limits: cfg.output_limits.clone(),
        }
    }

    /// Completes `req` with this run's sampling settings and returns the text.
    pub fn complete(&mut self, stage: Stage, req: PromptRequest, max_units: usize) -> Result<String, LlmError> {
        let req = req.top_p(self.top_p).max_output_units(max_units);
        Ok(llm::complete(self.llm, &req, &mut self.ledger, stage)?.text)
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        warn!("{message}");
        self.warnings.push(message);
    }
}

/// The backends a run talks to.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub llm: &'a dyn LlmBackend,
    pub search: &'a dyn SearchBackend,
}

/// Retrieval plus post-processing. Zero usable results degrade to an empty
/// document set rather than failing the run.
fn gather_documents(
    ctx: &mut RunContext<'_>,
    input: &TaskInput,
    cfg: &PipelineConfig,
    search: &dyn SearchBackend,
) -> Result<DocumentSet, StageFailure> {
    let query = build_query(input).at(Stage::Retrieve)?;
    let raw = match retrieve(&query, search, cfg.top_k_for(input.mode), &mut ctx.ledger) {
        Ok(raw) => raw,
        Err(RetrievalError::EmptyResults) => {
            ctx.warn(format!("search for `{query}` returned nothing"));
            return Ok(DocumentSet::default());
        }
        Err(e) => return Err(e).at(Stage::Retrieve),
    };
    let reranked = match input.mode {
        Mode::LongForm => {
            let entity = input.entity_hint.as_deref().unwrap_or_default();
            match rerank_longform(&raw, entity, &cfg.encyclopedia_hosts) {
                Ok(r) => r,
                Err(_) => {
                    ctx.warn(format!("no result mentions `{entity}`"));
                    Vec::new()
                }
            }
        }
        Mode::ShortQa => rerank_shortqa(&raw, &cfg.leak_domains),
    };
    if reranked.is_empty() && input.mode == Mode::ShortQa {
        ctx.warn("every search result was filtered out");
    }
    let processed = compress(&reranked, input.mode, cfg.context_budget, &CompressOptions::from_config(cfg));
    Ok(DocumentSet::new(raw, processed))
}

fn generate(
    ctx: &mut RunContext<'_>,
    input: &TaskInput,
    cfg: &PipelineConfig,
    docs: &DocumentSet,
) -> Result<GenerationOutput, PipelineError> {
    let with_rag = cfg.use_rag && !docs.is_empty();
    if cfg.use_rag && !with_rag {
        ctx.warn("no documents for RAG; generating without them");
    }
    let req = if with_rag {
        let template = match input.mode {
            Mode::LongForm => TemplateId::RagAnswerLongForm,
            Mode::ShortQa => TemplateId::RagAnswerShortQa,
        };
        PromptRequest::new(template)
            .slot("question", input.question.as_str())
            .slot("passage", docs.passage())
    } else {
        PromptRequest::new(TemplateId::PlainAnswer).slot("question", input.question.as_str())
    };
    let text = ctx.complete(Stage::Generate, req, ctx.limits.answer)?.trim().to_string();
    if text.is_empty() {
        return Err(PipelineError::EmptyGeneration);
    }
    Ok(if with_rag {
        GenerationOutput::with_rag(text, docs.clone())
    } else {
        GenerationOutput::plain(text)
    })
}

fn correct_all(
    ctx: &mut RunContext<'_>,
    facts: &FactSet,
    docs: &DocumentSet,
    input: &TaskInput,
    strategy: CorrectionStrategy,
) -> Result<FactSet, PipelineError> {
    if docs.is_empty() {
        ctx.warn("no documents to correct against; facts kept as extracted");
        return Ok(facts.clone());
    }
    let mut out = Vec::with_capacity(facts.len());
    for fact in &facts.facts {
        let corrected = match strategy {
            CorrectionStrategy::CorrectAll => correct_fact(ctx, fact, docs, input, CorrectionMode::All)?,
            CorrectionStrategy::VerifyThenCorrectFalse if fact.label == Label::False => {
                correct_fact(ctx, fact, docs, input, CorrectionMode::False)?
            }
            CorrectionStrategy::VerifyThenCorrectFalse => fact.clone(),
        };
        out.push(corrected);
    }
    Ok(FactSet::new(out))
}

fn enter(stages: &mut Vec<Stage>, input: &TaskInput, stage: Stage) {
    info!(id = %input.id, stage = %stage, "stage");
    stages.push(stage);
}

/// Runs the whole correction pipeline for one input.
///
/// `cfg` should already be validated; it is validated again here so a bad
/// config surfaces as a failure instead of undefined stage behaviour.
pub fn run_pipeline(input: &TaskInput, cfg: &PipelineConfig, backends: Backends<'_>) -> Result<RunRecord, StageFailure> {
    let started = Instant::now();
    let cfg = crate::config::validate_config(cfg.clone()).at(Stage::Retrieve)?;
    input
        .check()
        .map_err(PipelineError::Precondition)
        .at(Stage::Retrieve)?;
    let mut ctx = RunContext::new(backends.llm, &cfg);
    let mut stages = Vec::new();

    enter(&mut stages, input, Stage::Retrieve);
    let docs = gather_documents(&mut ctx, input, &cfg, backends.search)?;

    enter(&mut stages, input, Stage::Generate);
    let baseline = generate(&mut ctx, input, &cfg, &docs).at(Stage::Generate)?;

    enter(&mut stages, input, Stage::Extract);
    let mut facts = extract_facts(&mut ctx, &baseline, cfg.max_facts).at(Stage::Extract)?;

    if cfg.verification_enabled() {
        enter(&mut stages, input, Stage::Verify);
        facts = if docs.is_empty() {
            ctx.warn("no documents to verify against; every fact is not mentioned");
            let mut labeled = facts;
            for fact in &mut labeled.facts {
                fact.label = Label::NotMentioned;
            }
            labeled
        } else {
            verify_facts(&mut ctx, &facts, &docs, input).at(Stage::Verify)?
        };
    }

    enter(&mut stages, input, Stage::Correct);
    let corrected = correct_all(&mut ctx, &facts, &docs, input, cfg.strategy()).at(Stage::Correct)?;
    let assembled = assemble(&corrected, cfg.nm_policy).at(Stage::Correct)?;

    let kat_skip = cfg.kat && !assembled.has_false();
    if !kat_skip {
        enter(&mut stages, input, Stage::Revise);
    }
    let final_output = revise(&mut ctx, input, &baseline, &assembled, cfg.kat).at(Stage::Revise)?;

    ctx.ledger.set_wall_clock(started.elapsed());
    Ok(RunRecord {
        schema_version: RUN_RECORD_SCHEMA_VERSION,
        input: input.clone(),
        baseline_output: baseline,
        documents: docs,
        facts: assembled,
        final_output,
        stages,
        warnings: ctx.warnings,
        ledger: ctx.ledger,
        config_snapshot: cfg,
    })
}
