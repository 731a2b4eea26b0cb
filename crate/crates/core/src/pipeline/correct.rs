use super::{AtomicFact, Disposition, Label, PipelineError, RunContext};
use crate::accounting::Stage;
use crate::llm::{PromptRequest, TemplateId};
use crate::retrieval::DocumentSet;
use crate::types::TaskInput;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionMode {
    /// Unverified fact; the model returns it unchanged when already correct.
    All,
    /// Fact verified False.
    False,
}

/// Collapses whitespace runs to single spaces and trims.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// `text` without a leading `prefix`, compared ASCII case-insensitively.
pub(crate) fn strip_prefix_ci<'a>(text: &'a str, prefix: &str) -> &'a str {
    match text.get(..prefix.len()) {
        Some(head) if head.eq_ignore_ascii_case(prefix) => &text[prefix.len()..],
        _ => text,
    }
}

/// Strips answer prefixes and wrapping quotes from a single-sentence reply.
pub(crate) fn clean_reply(reply: &str, prefixes: &[&str]) -> String {
    let mut text = reply.trim();
    for prefix in prefixes {
        text = strip_prefix_ci(text, prefix).trim_start();
    }
    let text = normalize_whitespace(text);
    let unquoted = text
        .strip_prefix('"')
        .and_then(|t| t.strip_suffix('"'))
        .filter(|t| !t.contains('"'));
    unquoted.map(str::trim).unwrap_or(&text).to_string()
}

/// Corrects one fact against the retrieved passage with a single call.
pub fn correct_fact(
    ctx: &mut RunContext<'_>,
    fact: &AtomicFact,
    docs: &DocumentSet,
    input: &TaskInput,
    mode: CorrectionMode,
) -> Result<AtomicFact, PipelineError> {
    let (template, expected) = match mode {
        CorrectionMode::All => (TemplateId::CorrectAll, Label::Unverified),
        CorrectionMode::False => (TemplateId::CorrectFalse, Label::False),
    };
    if fact.label != expected {
        return Err(PipelineError::Precondition(format!(
            "{mode:?} correction of fact {} labeled {:?}",
            fact.index, fact.label
        )));
    }
    let req = PromptRequest::new(template)
        .slot("question", input.question.as_str())
        .slot("passage", docs.passage())
        .slot("statement", fact.text.as_str());
    let reply = ctx.complete(Stage::Correct, req, ctx.limits.correct)?;
    let corrected = clean_reply(&reply, &["Answer:", "Corrected statement:"]);

    let mut out = fact.clone();
    if corrected.is_empty() {
        ctx.warn(format!("empty correction for fact {}; keeping the original", fact.index));
        out.corrected_text = None;
        out.disposition = Disposition::Kept;
    } else if mode == CorrectionMode::All && corrected == normalize_whitespace(&fact.text) {
        out.corrected_text = None;
        out.disposition = Disposition::Kept;
    } else {
        out.corrected_text = Some(corrected);
        out.disposition = Disposition::Corrected;
    }
    Ok(out)
}
