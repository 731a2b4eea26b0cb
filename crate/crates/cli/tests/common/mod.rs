//! Scratch workspaces with a scripted model, a fixture search directory and
//! a config wiring them together.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rac_core::llm::{Script, ScriptRule, TemplateId};
use rac_core::retrieval::{FixtureSearch, SearchResult};
use rac_core::types::{Mode, TaskInput};
use tempfile::TempDir;

pub struct Workspace {
    pub dir: TempDir,
}

impl Workspace {
    pub fn new(script: &Script) -> Self {
        let ws = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        std::fs::create_dir_all(ws.fixtures()).unwrap();
        ws.write_script(script);
        ws.write_config("");
        ws
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn config(&self) -> PathBuf {
        self.path("rac.toml")
    }

    pub fn fixtures(&self) -> PathBuf {
        self.path("fixtures")
    }

    pub fn write_script(&self, script: &Script) {
        std::fs::write(self.path("script.json"), serde_json::to_string_pretty(script).unwrap()).unwrap();
    }

    /// Mock model and fixture search; `top` is prepended as extra top-level keys.
    pub fn write_config(&self, top: &str) {
        let text = format!(
            "{top}\n[backends.llm]\nkind = \"mock\"\nscript = \"script.json\"\n\n\
             [backends.search]\nkind = \"fixture\"\ndir = \"fixtures\"\n\n\
             [backends.cache]\nenabled = true\ndir = \"cache\"\n"
        );
        std::fs::write(self.config(), text).unwrap();
    }

    pub fn add_fixture(&self, query: &str, results: &[SearchResult]) {
        FixtureSearch::write_fixture(&self.fixtures(), query, results).unwrap();
    }

    pub fn write_corpus(&self, name: &str, lines: &[String]) -> PathBuf {
        let path = self.path(name);
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();
        path
    }
}

pub fn task_line(task: &TaskInput) -> String {
    serde_json::to_string(task).unwrap()
}

/// Template-level rules that answer every prompt of a run, forever.
pub fn generic_script() -> Script {
    let rule = |t: TemplateId, r: &str| ScriptRule::for_template(t, &[r]).repeating();
    Script {
        rules: vec![
            rule(TemplateId::PlainAnswer, "Plain answer without documents."),
            rule(TemplateId::RagAnswerLongForm, "Long answer grounded in the passage."),
            rule(TemplateId::RagAnswerShortQa, "Short grounded answer."),
            rule(TemplateId::ExtractFacts, "Fact one holds.\nFact two is wrong.\nFact three is unknown."),
            rule(
                TemplateId::VerifyFacts,
                "Statement 1: True\nStatement 2: False\nStatement 3: Not Mentioned",
            ),
            rule(TemplateId::CorrectFalse, "Fact two is fixed."),
            rule(TemplateId::CorrectAll, "Fact is restated."),
            rule(TemplateId::ReviseLongForm, "Revised long answer."),
            rule(TemplateId::ReviseShortQa, "Revised short answer."),
        ],
        sequence: vec![],
    }
}

/// Task `i` of a mixed corpus: even ids are biographies, odd ids are short
/// questions. Every tenth task has no search results at all.
pub fn mixed_task(ws: &Workspace, i: usize) -> TaskInput {
    let task = if i.is_multiple_of(2) {
        let name = format!("Person {i}");
        TaskInput::new(format!("t{i}"), format!("Tell me a bio of {name}."), Mode::LongForm).with_entity(name)
    } else {
        TaskInput::new(format!("t{i}"), format!("What is item {i}?"), Mode::ShortQa)
    };
    if i % 10 != 9 {
        let query = match task.mode {
            Mode::LongForm => format!("{} Wikipedia", task.entity_hint.as_deref().unwrap()),
            Mode::ShortQa => task.question.clone(),
        };
        let subject = task.entity_hint.clone().unwrap_or_else(|| format!("Item {i}"));
        ws.add_fixture(
            &query,
            &[
                SearchResult::new(1, "https://huggingface.co/datasets/x", "leak", format!("{subject} leak. Answer key.")),
                SearchResult::new(
                    2,
                    format!("https://en.wikipedia.org/wiki/T{i}"),
                    subject.clone(),
                    format!("{subject} is documented here. It has two sentences.\n== References ==\nRef."),
                ),
                SearchResult::new(3, "https://example.org/blog", "blog", format!("{subject} blog post. More text.")),
            ],
        );
    }
    task
}

pub fn mixed_corpus(ws: &Workspace, n: usize) -> (Vec<TaskInput>, PathBuf) {
    let tasks: Vec<TaskInput> = (0..n).map(|i| mixed_task(ws, i)).collect();
    let lines: Vec<String> = tasks.iter().map(task_line).collect();
    let path = ws.write_corpus("corpus.jsonl", &lines);
    (tasks, path)
}

pub fn read_lines(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}
