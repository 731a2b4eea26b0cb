use std::collections::VecDeque;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{render_prompt, CompletionResponse, LlmBackend, LlmError, PromptRequest, TemplateId, Usage};
use crate::units::count_units;

/// A response rule: answers requests for `template` (any template when unset)
/// whose rendered prompt contains `contains`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<TemplateId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    pub responses: Vec<String>,
    /// Cycle through `responses` forever instead of running out.
    #[serde(default)]
    pub repeat: bool,
}

impl ScriptRule {
    pub fn for_template(template: TemplateId, responses: &[&str]) -> Self {
        Self {
            template: Some(template),
            contains: None,
            responses: responses.iter().map(|s| s.to_string()).collect(),
            repeat: false,
        }
    }

    pub fn containing(mut self, needle: impl Into<String>) -> Self {
        self.contains = Some(needle.into());
        self
    }

    pub fn repeating(mut self) -> Self {
        self.repeat = true;
        self
    }

    fn matches(&self, req: &PromptRequest, prompt: &str) -> bool {
        self.template.is_none_or(|t| t == req.template_id)
            && self.contains.as_deref().is_none_or(|needle| prompt.contains(needle))
    }
}

/// Mock script file: rules are tried in order, then the positional
/// `sequence` is consumed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub sequence: Vec<String>,
}

#[derive(Debug)]
struct ScriptState {
    cursors: Vec<usize>,
    sequence: VecDeque<String>,
}

/// Deterministic backend replaying a [`Script`].
///
/// Script consumption is serialized behind a lock. Rule scripts are
/// deterministic under any worker count; positional sequences are only
/// deterministic with a single worker.
#[derive(Debug)]
pub struct ScriptedLlm {
    id: String,
    rules: Vec<ScriptRule>,
    state: Mutex<ScriptState>,
    delay: Duration,
    calls: AtomicUsize,
}

impl ScriptedLlm {
    pub fn new(script: Script) -> Self {
        let state = ScriptState {
            cursors: vec![0; script.rules.len()],
            sequence: script.sequence.into(),
        };
        Self {
            id: "mock".into(),
            rules: script.rules,
            state: Mutex::new(state),
            delay: Duration::ZERO,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn sequence<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self::new(Script {
            rules: Vec::new(),
            sequence: responses.into_iter().map(Into::into).collect(),
        })
    }

    pub fn from_rules(rules: Vec<ScriptRule>) -> Self {
        Self::new(Script {
            rules,
            sequence: Vec::new(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::InvalidResponse(format!("reading script {}: {e}", path.display())))?;
        let script: Script = serde_json::from_str(&text)
            .map_err(|e| LlmError::InvalidResponse(format!("parsing script {}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Sleeps this long on every call, simulating backend latency.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    /// Number of requests that were answered.
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn next_response(&self, req: &PromptRequest, prompt: &str) -> Option<String> {
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.responses.is_empty() || !rule.matches(req, prompt) {
                continue;
            }
            let cursor = state.cursors[i];
            if cursor < rule.responses.len() {
                state.cursors[i] += 1;
                return Some(rule.responses[cursor].clone());
            }
            if rule.repeat {
                state.cursors[i] = 1;
                return Some(rule.responses[0].clone());
            }
        }
        state.sequence.pop_front()
    }
}

impl LlmBackend for ScriptedLlm {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &PromptRequest) -> Result<CompletionResponse, LlmError> {
        let started = Instant::now();
        let prompt = render_prompt(req)?;
        let text = self
            .next_response(req, &prompt)
            .ok_or(LlmError::ScriptExhausted {
                template: req.template_id,
            })?;
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(CompletionResponse {
            usage: Usage {
                prompt_units: count_units(&prompt) as u64,
                completion_units: count_units(&text) as u64,
            },
            text,
            latency: started.elapsed(),
            backend_id: self.id.clone(),
            cached: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accounting::{CallLedger, Stage};
    use crate::llm::complete;

    fn plain(q: &str) -> PromptRequest {
        PromptRequest::new(TemplateId::PlainAnswer).slot("question", q)
    }

    #[test]
    fn positional_script_in_order_and_counted() {
        let llm = ScriptedLlm::sequence(["A", "B"]);
        let mut ledger = CallLedger::new();
        assert_eq!(complete(&llm, &plain("x"), &mut ledger, Stage::Generate).unwrap().text, "A");
        assert_eq!(complete(&llm, &plain("x"), &mut ledger, Stage::Generate).unwrap().text, "B");
        assert_eq!(ledger.generation_calls(), 2);
    }

    #[test]
    fn exhausted_script_errors() {
        let llm = ScriptedLlm::sequence(["A"]);
        let mut ledger = CallLedger::new();
        complete(&llm, &plain("x"), &mut ledger, Stage::Generate).unwrap();
        let err = complete(&llm, &plain("x"), &mut ledger, Stage::Generate).unwrap_err();
        assert_eq!(
            err,
            LlmError::ScriptExhausted {
                template: TemplateId::PlainAnswer
            }
        );
        assert_eq!(ledger.generation_calls(), 1);
    }

    #[test]
    fn rules_match_template_and_substring() {
        let llm = ScriptedLlm::new(Script {
            rules: vec![
                ScriptRule::for_template(TemplateId::PlainAnswer, &["paris"]).containing("France"),
                ScriptRule::for_template(TemplateId::PlainAnswer, &["generic"]).repeating(),
            ],
            sequence: vec![],
        });
        assert_eq!(llm.complete(&plain("capital of France?")).unwrap().text, "paris");
        // first rule is spent, falls through
        assert_eq!(llm.complete(&plain("capital of France?")).unwrap().text, "generic");
        assert_eq!(llm.complete(&plain("other")).unwrap().text, "generic");
        assert_eq!(llm.call_count(), 3);
        let extract = PromptRequest::new(TemplateId::ExtractFacts).slot("content", "c");
        assert!(matches!(llm.complete(&extract), Err(LlmError::ScriptExhausted { .. })));
    }

    #[test]
    fn identical_scripts_replay_identically() {
        let script = Script {
            rules: vec![ScriptRule::for_template(TemplateId::PlainAnswer, &["a", "b"]).repeating()],
            sequence: vec!["z".into()],
        };
        let run = || {
            let llm = ScriptedLlm::new(script.clone());
            (0..5)
                .map(|i| llm.complete(&plain(&i.to_string())).unwrap().text)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
        assert_eq!(run(), ["a", "b", "a", "b", "a"]);
    }

    #[test]
    fn missing_slot_surfaces_from_mock() {
        let llm = ScriptedLlm::sequence(["A"]);
        let req = PromptRequest::new(TemplateId::VerifyFacts).slot("question", "q");
        assert!(matches!(llm.complete(&req), Err(LlmError::MissingSlot { .. })));
        assert_eq!(llm.call_count(), 0);
    }

    #[test]
    fn script_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        std::fs::write(
            &path,
            r#"{"rules":[{"template":"extract_facts","responses":["A."],"repeat":true}],"sequence":["x"]}"#,
        )
        .unwrap();
        let llm = ScriptedLlm::from_file(&path).unwrap();
        let extract = PromptRequest::new(TemplateId::ExtractFacts).slot("content", "c");
        assert_eq!(llm.complete(&extract).unwrap().text, "A.");
        assert_eq!(llm.complete(&plain("q")).unwrap().text, "x");
    }
}
