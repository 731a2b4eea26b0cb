use std::sync::LazyLock;

use regex::Regex;

use super::{FactSet, PipelineError, RunContext};
use crate::accounting::Stage;
use crate::llm::{PromptRequest, TemplateId};
use crate::types::GenerationOutput;

static LIST_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:\(?\d{1,3}[.)]|[-*•–·])(?:\s+|$)").unwrap());

/// Splits an extraction reply into fact sentences: one per non-blank line,
/// with list numbering and bullets removed. Returns at most `max` facts and
/// the number of lines dropped by the cap.
pub fn parse_fact_lines(reply: &str, max: usize) -> (Vec<String>, usize) {
    let mut facts: Vec<String> = reply
        .lines()
        .map(|line| LIST_MARKER.replace(line, "").trim().to_string())
        .filter(|line| !line.is_empty() && !line.eq_ignore_ascii_case("facts:"))
        .collect();
    let dropped = facts.len().saturating_sub(max);
    facts.truncate(max);
    (facts, dropped)
}

/// Asks the model to break `output` into independent facts.
pub fn extract_facts(
    ctx: &mut RunContext<'_>,
    output: &GenerationOutput,
    max_facts: usize,
) -> Result<FactSet, PipelineError> {
    if output.text.trim().is_empty() {
        return Err(PipelineError::Precondition("cannot extract facts from an empty answer".into()));
    }
    let req = PromptRequest::new(TemplateId::ExtractFacts).slot("content", output.text.as_str());
    let reply = ctx.complete(Stage::Extract, req, ctx.limits.extract)?;
    let (facts, dropped) = parse_fact_lines(&reply, max_facts);
    if dropped > 0 {
        ctx.warn(format!("extraction returned more than {max_facts} facts; dropped {dropped}"));
    }
    if facts.is_empty() {
        return Err(PipelineError::EmptyExtraction);
    }
    Ok(FactSet::from_texts(facts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PipelineConfig;
    use crate::llm::ScriptedLlm;

    #[test]
    fn two_facts_in_order() {
        let reply = "Sara Paxton is an American actress and singer.\nShe was born on November 25, 1988, in Woodland Hills, Los Angeles, California.";
        let llm = ScriptedLlm::sequence([reply]);
        let mut ctx = RunContext::new(&llm, &PipelineConfig::default());
        let facts = extract_facts(&mut ctx, &GenerationOutput::plain("answer"), 64).unwrap();
        assert_eq!(facts.len(), 2);
        assert_eq!(facts.facts[0].index, 1);
        assert_eq!(facts.facts[0].text, "Sara Paxton is an American actress and singer.");
        assert!(facts.facts[1].text.starts_with("She was born on November 25, 1988"));
        assert_eq!(ctx.ledger.stage(Stage::Extract).generation_calls, 1);
    }

    #[test]
    fn empty_reply_is_empty_extraction() {
        let llm = ScriptedLlm::sequence([""]);
        let mut ctx = RunContext::new(&llm, &PipelineConfig::default());
        assert!(matches!(
            extract_facts(&mut ctx, &GenerationOutput::plain("answer"), 64),
            Err(PipelineError::EmptyExtraction)
        ));
    }

    #[test]
    fn numbering_and_bullets_are_stripped() {
        assert_eq!(parse_fact_lines("1. A.\n2. B.", 64).0, vec!["A.", "B."]);
        assert_eq!(
            parse_fact_lines("Facts:\n- A.\n\n• B.\n  * C.\n3) D.\n1988 was a year.\n3.5 million people live there.", 64).0,
            vec!["A.", "B.", "C.", "D.", "1988 was a year.", "3.5 million people live there."]
        );
    }

    #[test]
    fn cap_drops_excess_lines() {
        let reply = (1..=70).map(|i| format!("Fact {i}.")).collect::<Vec<_>>().join("\n");
        let (facts, dropped) = parse_fact_lines(&reply, 64);
        assert_eq!(facts.len(), 64);
        assert_eq!(dropped, 6);
        assert_eq!(facts[63], "Fact 64.");
    }
}
