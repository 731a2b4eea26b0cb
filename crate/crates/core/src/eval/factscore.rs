use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::llm::{LlmBackend, PromptRequest, TemplateId};
use crate::types::RunRecord;

/// One fact with the judge's verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgedFact {
    pub fact: String,
    pub supported: bool,
    pub judge_id: String,
}

/// Decides whether a fact is supported by a reference text.
pub trait FactJudge: Send + Sync {
    fn id(&self) -> &str;

    fn supported(&self, fact: &str, reference: &str) -> Result<bool, EvalError>;
}

fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches(['.', '!', '?'])
        .to_lowercase()
}

/// Supported iff the fact, case and whitespace folded and without its final
/// punctuation, occurs verbatim in the reference.
#[derive(Debug, Clone, Copy, Default)]
pub struct SubstringJudge;

impl FactJudge for SubstringJudge {
    fn id(&self) -> &str {
        "substring"
    }

    fn supported(&self, fact: &str, reference: &str) -> Result<bool, EvalError> {
        let fact = normalize(fact);
        Ok(!fact.is_empty() && normalize(reference).contains(&fact))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysSupported;

impl FactJudge for AlwaysSupported {
    fn id(&self) -> &str {
        "always_supported"
    }

    fn supported(&self, _fact: &str, _reference: &str) -> Result<bool, EvalError> {
        Ok(true)
    }
}

/// Asks a language model whether each fact follows from the reference.
pub struct LlmJudge<L> {
    llm: L,
    id: String,
    max_output_units: usize,
}

impl<L: LlmBackend> LlmJudge<L> {
    pub fn new(llm: L, max_output_units: usize) -> Self {
        let id = format!("llm:{}", llm.id());
        Self {
            llm,
            id,
            max_output_units,
        }
    }
}

impl<L: LlmBackend> FactJudge for LlmJudge<L> {
    fn id(&self) -> &str {
        &self.id
    }

    fn supported(&self, fact: &str, reference: &str) -> Result<bool, EvalError> {
        let req = PromptRequest::new(TemplateId::JudgeFact)
            .slot("passage", reference)
            .slot("statement", fact)
            .top_p(crate::config::DEFAULT_TOP_P)
            .max_output_units(self.max_output_units);
        let reply = self
            .llm
            .complete(&req)
            .map_err(|e| EvalError::JudgeUnavailable(e.to_string()))?;
        let first = reply
            .text
            .split(|c: char| !c.is_alphanumeric())
            .find(|w| !w.is_empty())
            .unwrap_or_default()
            .to_ascii_lowercase();
        match first.as_str() {
            "true" | "yes" | "supported" => Ok(true),
            "false" | "no" | "unsupported" | "not" => Ok(false),
            _ => Err(EvalError::JudgeUnavailable(format!("unreadable verdict `{}`", reply.text.trim()))),
        }
    }
}

/// Splits text into sentences at `.`, `!` or `?` followed by whitespace,
/// and at line breaks.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut start = 0;
        let chars: Vec<(usize, char)> = line.char_indices().collect();
        for (i, &(pos, c)) in chars.iter().enumerate() {
            let at_boundary = chars.get(i + 1).is_some_and(|(_, next)| next.is_whitespace());
            if matches!(c, '.' | '!' | '?') && at_boundary {
                out.push(line[start..pos + c.len_utf8()].trim().to_string());
                start = pos + c.len_utf8();
            }
        }
        out.push(line[start..].trim().to_string());
    }
    out.retain(|s| !s.is_empty());
    out
}

/// Per-fact verdicts and the supported fraction for one output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactualityScore {
    pub facts: Vec<JudgedFact>,
    pub score: f64,
}

/// Fraction of the final output's sentences that `judge` finds supported by
/// `reference`.
pub fn factuality_score(run: &RunRecord, judge: &dyn FactJudge, reference: &str) -> Result<FactualityScore, EvalError> {
    let facts = split_sentences(&run.final_output);
    if facts.is_empty() {
        return Err(EvalError::NoFacts);
    }
    let judged = facts
        .into_iter()
        .map(|fact| {
            let supported = judge.supported(&fact, reference)?;
            Ok(JudgedFact {
                fact,
                supported,
                judge_id: judge.id().to_string(),
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let supported = judged.iter().filter(|f| f.supported).count();
    Ok(FactualityScore {
        score: supported as f64 / judged.len() as f64,
        facts: judged,
    })
}
