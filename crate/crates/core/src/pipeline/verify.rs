use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;

use super::{FactSet, Label, PipelineError, RunContext};
use crate::accounting::Stage;
use crate::llm::{PromptRequest, TemplateId};
use crate::retrieval::DocumentSet;
use crate::types::TaskInput;

static STATEMENT_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)^[\s*_#>"'-]*statement\s*#?\s*(\d+)[\s*_]*[:.\-–=][\s*_"']*(true|false|not[\s_-]*mentioned)\b"#)
        .unwrap()
});

/// Labels parsed from a verification reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationParse {
    pub labels: Vec<Label>,
    pub warnings: Vec<String>,
}

/// Parses `Statement <i>: <Label>` lines for `n` facts.
///
/// Labels are assigned by statement number. Unknown or malformed lines are
/// ignored, the last of duplicate lines wins and unanswered statements are
/// NotMentioned. Never fails.
pub fn parse_verification(reply: &str, n: usize) -> VerificationParse {
    let mut found: BTreeMap<usize, Label> = BTreeMap::new();
    let mut warnings = Vec::new();
    // some models emit the scaffold's newlines as a literal backslash-n
    let reply = reply.replace("\\n", "\n");
    for line in reply.lines() {
        let Some(caps) = STATEMENT_LINE.captures(line) else {
            continue;
        };
        let Ok(number) = caps[1].parse::<usize>() else {
            warnings.push(format!("unparseable statement number in `{}`", line.trim()));
            continue;
        };
        if number == 0 || number > n {
            warnings.push(format!("verification mentions statement {number} of {n}"));
            continue;
        }
        let label = match caps[2].to_ascii_lowercase().as_str() {
            "true" => Label::True,
            "false" => Label::False,
            _ => Label::NotMentioned,
        };
        if found.insert(number, label).is_some() {
            warnings.push(format!("statement {number} labeled more than once; keeping the last"));
        }
    }
    let labels = (1..=n)
        .map(|i| {
            found.get(&i).copied().unwrap_or_else(|| {
                warnings.push(format!("no label for statement {i}; treating as not mentioned"));
                Label::NotMentioned
            })
        })
        .collect();
    VerificationParse { labels, warnings }
}

/// Numbered statement list placed in the verification prompt.
pub fn format_statements(facts: &FactSet) -> String {
    facts
        .facts
        .iter()
        .map(|f| format!("{}. {}", f.index, f.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Labels every fact True, False or NotMentioned with one batched call.
pub fn verify_facts(
    ctx: &mut RunContext<'_>,
    facts: &FactSet,
    docs: &DocumentSet,
    input: &TaskInput,
) -> Result<FactSet, PipelineError> {
    if facts.facts.iter().any(|f| f.label != Label::Unverified) {
        return Err(PipelineError::Precondition("verification expects unverified facts".into()));
    }
    if docs.is_empty() {
        return Err(PipelineError::NoDocuments);
    }
    let req = PromptRequest::new(TemplateId::VerifyFacts)
        .slot("question", input.question.as_str())
        .slot("passage", docs.passage())
        .slot("statements", format_statements(facts));
    let reply = ctx.complete(Stage::Verify, req, ctx.limits.verify)?;
    let parsed = parse_verification(&reply, facts.len());
    for warning in parsed.warnings {
        ctx.warn(warning);
    }
    let mut labeled = facts.clone();
    for (fact, label) in labeled.facts.iter_mut().zip(parsed.labels) {
        fact.label = label;
    }
    Ok(labeled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use Label::{False as F, NotMentioned as NM, True as T};

    #[test]
    fn scaffold_format() {
        let parsed = parse_verification("Statement 1: True\nStatement 2: False", 2);
        assert_eq!(parsed.labels, vec![T, F]);
        assert!(parsed.warnings.is_empty());
    }

    #[test]
    fn all_true() {
        let reply = (1..=5).map(|i| format!("Statement {i}: True")).collect::<Vec<_>>().join("\n");
        assert_eq!(parse_verification(&reply, 5).labels, vec![T; 5]);
    }

    #[test]
    fn missing_statement_is_not_mentioned_with_warning() {
        let parsed = parse_verification("Statement 1: True\nStatement 2: False", 3);
        assert_eq!(parsed.labels, vec![T, F, NM]);
        assert_eq!(parsed.warnings.len(), 1);
    }

    #[test]
    fn labels_follow_statement_numbers() {
        let reply = "Statement 3: Not Mentioned\nstatement 1: FALSE\n**Statement 2:** true";
        assert_eq!(parse_verification(reply, 3).labels, vec![F, T, NM]);
    }

    #[test]
    fn duplicates_keep_last() {
        let parsed = parse_verification("Statement 1: True\nStatement 1: False", 1);
        assert_eq!(parsed.labels, vec![F]);
        assert_eq!(parsed.warnings.len(), 1);
    }

    #[test]
    fn literal_backslash_n_separators() {
        let reply = r"Statement 1: True \n Statement 2: False \n Statement 3: True";
        assert_eq!(parse_verification(reply, 3).labels, vec![T, F, T]);
    }

    #[test]
    fn out_of_range_and_noise_are_ignored() {
        let reply = "Here are the results:\nStatement 0: True\nStatement 9: False\nStatement 2 - Not mentioned\nStatement 1: maybe";
        let parsed = parse_verification(reply, 2);
        assert_eq!(parsed.labels, vec![NM, NM]);
        assert!(parsed.warnings.len() >= 3);
    }

    #[test]
    fn statements_are_numbered() {
        let facts = FactSet::from_texts(["A.", "B."]);
        assert_eq!(format_statements(&facts), "1. A.\n2. B.");
    }

    proptest! {
        #[test]
        fn parser_is_total(reply in "\\PC*", n in 0usize..20) {
            let parsed = parse_verification(&reply, n);
            prop_assert_eq!(parsed.labels.len(), n);
            prop_assert!(parsed.labels.iter().all(|l| *l != Label::Unverified));
        }
    }
}
