//! Prompt templates and slot substitution.
//!
//! Templates use `{slot}` placeholders and are rendered in a single pass, so
//! braces inside slot values (passages often contain them) are never
//! re-interpreted.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    /// The bare task question, used when generating without retrieved context.
    PlainAnswer,
    RagAnswerLongForm,
    #[serde(rename = "rag_answer_short_qa")]
    RagAnswerShortQa,
    ExtractFacts,
    VerifyFacts,
    CorrectAll,
    CorrectFalse,
    ReviseLongForm,
    #[serde(rename = "revise_short_qa")]
    ReviseShortQa,
    /// Supported/unsupported question used by the LLM-backed fact judge.
    JudgeFact,
}

impl TemplateId {
    pub const ALL: [TemplateId; 10] = [
        TemplateId::PlainAnswer,
        TemplateId::RagAnswerLongForm,
        TemplateId::RagAnswerShortQa,
        TemplateId::ExtractFacts,
        TemplateId::VerifyFacts,
        TemplateId::CorrectAll,
        TemplateId::CorrectFalse,
        TemplateId::ReviseLongForm,
        TemplateId::ReviseShortQa,
        TemplateId::JudgeFact,
    ];

    pub fn template(self) -> &'static str {
        match self {
            TemplateId::PlainAnswer => "{question}",
            TemplateId::RagAnswerLongForm => RAG_LONG_FORM,
            TemplateId::RagAnswerShortQa => RAG_SHORT_QA,
            TemplateId::ExtractFacts => EXTRACT_FACTS,
            TemplateId::VerifyFacts => VERIFY_FACTS,
            TemplateId::CorrectAll => CORRECT_ALL,
            TemplateId::CorrectFalse => CORRECT_FALSE,
            TemplateId::ReviseLongForm => REVISE_LONG_FORM,
            TemplateId::ReviseShortQa => REVISE_SHORT_QA,
            TemplateId::JudgeFact => JUDGE_FACT,
        }
    }

    /// Slot names the template references, in order of first appearance.
    pub fn required_slots(self) -> Vec<&'static str> {
        let mut slots = Vec::new();
        for segment in segments(self.template()) {
            if let Segment::Slot(name) = segment {
                if !slots.contains(&name) {
                    slots.push(name);
                }
            }
        }
        slots
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let json = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(json.as_str().unwrap_or_default())
    }
}

const RAG_LONG_FORM: &str = "{question}\nAnswer based on the following text and keep the answer authentic to the texts:\n\"{passage}\"\n\nAnswer:\n";

const RAG_SHORT_QA: &str = "Passages:\"{passage}\"\n{question}\nPlease find the answer to the question from the above passages and generate the answer text. If there is an answer in the documents, please keep the answer authentic to the passage, if the question is to ask for opinion or if there is no answer found in the documents, please output \"I have no comment\".\nAnswer:\n";

const EXTRACT_FACTS: &str = "Please breakdown the following content into independent facts without pronouns(Do not use He, She, It...)(each fact should be a full sentence, each fact per line):\"{content}\"\nFacts:\n";

const VERIFY_FACTS: &str = "{question}\npassage:\"{passage}\"\nPlease verify the below statements to the above question into true or false or not mentioned based on the above passages (one answer per line with label true or false or not mentioned.)\nTrue means the similar statement can be found in the above passage and have the same meaning.\nFalse means the similar statement can be found in the above passage  but have the different meaning.\nNot Mentioned means the similar statement cannot be found in the above passage.\n\nStatements:\"{statements}\"\n\nOutput Format:\nStatement 1: True\nStatement 2: False \n ... \nStatement N: Not Mentioned\n\nAnswer(start with the output directly without additional comments):\n";

const CORRECT_ALL: &str = "{question}\npassage:\"{passage}\"\nCorrect the following statement and output the corrected version based on the above passage. If the statement is correct, directly output the original statement. In your answer, start with the corrected answer or original correct statement directly without repeating the question. The answer should be a single sentence and should be concise and to the point of the question. \n\nStatement:\"{statement}\"\n\nAnswer:\n";

const CORRECT_FALSE: &str = "{question}\npassage:\"{passage}\"\nCorrect the following statement and output the corrected version based on the above passage. In your answer, start with the corrected answer directly without repeating the question or the original statement. \n\nStatement:\"{statement}\"\n\nAnswer:\n";

const REVISE_LONG_FORM: &str = "{question_and_answer}\n\nPlease correct the above answer into a corrected one based on the following verified facts. In your answer, start with the corrected answer directly without repeating the question or the original answer.\n\nVerified facts:\"{facts}\"\n\nCorrected answer:\n";

const REVISE_SHORT_QA: &str = "{question_and_answer}\n\nPlease correct the above answer into a corrected one based on the following verified facts. In your answer, start with the corrected answer directly without repeating the question or the original answer. if the answer is \"I have no comment\", output \"I have no comment\".\n\nVerified facts:\"{facts}\"\n\nCorrected answer:\n";

const JUDGE_FACT: &str = "Reference:\"{passage}\"\nIs the following statement supported by the reference above? Answer with a single word, True or False.\n\nStatement:\"{statement}\"\n\nAnswer:\n";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SamplingParams {
    pub top_p: f64,
}

/// A template plus the values for its slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub template_id: TemplateId,
    pub slots: BTreeMap<String, String>,
    pub sampling: SamplingParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_output_units: Option<usize>,
}

impl PromptRequest {
    pub fn new(template_id: TemplateId) -> Self {
        Self {
            template_id,
            slots: BTreeMap::new(),
            sampling: SamplingParams {
                top_p: crate::config::DEFAULT_TOP_P,
            },
            max_output_units: None,
        }
    }

    pub fn slot(mut self, name: &str, value: impl Into<String>) -> Self {
        self.slots.insert(name.to_string(), value.into());
        self
    }

    pub fn top_p(mut self, top_p: f64) -> Self {
        self.sampling.top_p = top_p;
        self
    }

    pub fn max_output_units(mut self, units: usize) -> Self {
        self.max_output_units = Some(units);
        self
    }
}

enum Segment<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn segments(template: &str) -> impl Iterator<Item = Segment<'_>> {
    let mut rest = template;
    std::iter::from_fn(move || {
        if rest.is_empty() {
            return None;
        }
        match rest.find('{') {
            Some(0) => {
                let close = rest.find('}').expect("unterminated slot in template");
                let name = &rest[1..close];
                rest = &rest[close + 1..];
                Some(Segment::Slot(name))
            }
            Some(open) => {
                let text = &rest[..open];
                rest = &rest[open..];
                Some(Segment::Text(text))
            }
            None => {
                let text = rest;
                rest = "";
                Some(Segment::Text(text))
            }
        }
    })
}

/// Renders the template with its slots substituted. Extra slots are ignored.
pub fn render_prompt(req: &PromptRequest) -> Result<String, LlmError> {
    let template = req.template_id.template();
    let mut out = String::with_capacity(template.len() + req.slots.values().map(String::len).sum::<usize>());
    for segment in segments(template) {
        match segment {
            Segment::Text(text) => out.push_str(text),
            Segment::Slot(name) => {
                let value = req.slots.get(name).ok_or_else(|| LlmError::MissingSlot {
                    template: req.template_id,
                    slot: name.to_string(),
                })?;
                out.push_str(value);
            }
        }
    }
    Ok(out)
}
