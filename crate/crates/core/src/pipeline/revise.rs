use super::correct::strip_prefix_ci;
use super::{FactSet, PipelineError, RunContext};
use crate::accounting::Stage;
use crate::llm::{PromptRequest, TemplateId};
use crate::types::{GenerationOutput, Mode, TaskInput};

pub const NO_COMMENT: &str = "I have no comment";

/// Whether `text` is the short-QA abstention answer.
pub fn is_no_comment(text: &str) -> bool {
    let trimmed = text.trim().trim_end_matches(['.', '!']).trim();
    trimmed.eq_ignore_ascii_case(NO_COMMENT)
}

/// Rewrites the original answer so that it agrees with the assembled facts.
///
/// With `kat` set, answers without any False fact are returned untouched
/// and no call is made. Short-QA abstentions also pass through unchanged.
pub fn revise(
    ctx: &mut RunContext<'_>,
    input: &TaskInput,
    original: &GenerationOutput,
    corrected: &FactSet,
    kat: bool,
) -> Result<String, PipelineError> {
    if kat && !corrected.has_false() {
        return Ok(original.text.clone());
    }
    if input.mode == Mode::ShortQa && is_no_comment(&original.text) {
        return Ok(original.text.clone());
    }
    let survivors = corrected.survivor_texts();
    if survivors.is_empty() {
        ctx.warn("no facts survived assembly; keeping the original answer");
        return Ok(original.text.clone());
    }

    let template = match input.mode {
        Mode::LongForm => TemplateId::ReviseLongForm,
        Mode::ShortQa => TemplateId::ReviseShortQa,
    };
    let req = PromptRequest::new(template)
        .slot("question_and_answer", format!("{}\n{}", input.question, original.text))
        .slot("facts", survivors.join("\n"));
    let reply = ctx.complete(Stage::Revise, req, ctx.limits.revise)?;
    let revised = strip_prefix_ci(reply.trim(), "Corrected answer:").trim();
    if revised.is_empty() {
        ctx.warn("empty revision; falling back to the corrected facts");
        return Ok(survivors.join(" "));
    }
    Ok(revised.to_string())
}
