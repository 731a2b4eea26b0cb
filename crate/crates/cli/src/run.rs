//! `rac run`: the pipeline over a JSONL corpus.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rac_core::accounting::{LatencyReport, Stage};
use rac_core::config::PipelineConfig;
use rac_core::pipeline::{run_pipeline, Backends};
use rac_core::types::{RunRecord, TaskInput, RUN_RECORD_SCHEMA_VERSION};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::backends::build_backends;
use crate::settings::resolve_config;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub corpus: PathBuf,
    pub config: PathBuf,
    pub out: PathBuf,
    pub workers: usize,
    pub overrides: Vec<String>,
}

/// Output line for a corpus line that produced no run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub schema_version: u32,
    pub id: Option<String>,
    /// 1-based line number in the corpus.
    pub line: usize,
    pub failed_stage: Option<Stage>,
    pub error: String,
}

/// One output line.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Run(Box<RunRecord>),
    Error(ErrorRecord),
}

impl Outcome {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(match self {
            Outcome::Run(record) => serde_json::to_string(record)?,
            Outcome::Error(error) => serde_json::to_string(error)?,
        })
    }
}

/// Counts and timings of a batch, written next to the output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub total: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub latency: LatencyReport,
}

impl RunSummary {
    fn from_outcomes(outcomes: &[Outcome]) -> Self {
        let ledgers: Vec<_> = outcomes
            .iter()
            .filter_map(|o| match o {
                Outcome::Run(r) => Some(&r.ledger),
                Outcome::Error(_) => None,
            })
            .collect();
        Self {
            total: outcomes.len(),
            succeeded: ledgers.len(),
            failed: outcomes.len() - ledgers.len(),
            latency: LatencyReport::from_ledgers(ledgers),
        }
    }
}

enum Parsed {
    Task(usize, TaskInput),
    Bad(ErrorRecord),
}

fn error_record(line: usize, id: Option<String>, failed_stage: Option<Stage>, error: String) -> ErrorRecord {
    ErrorRecord {
        schema_version: RUN_RECORD_SCHEMA_VERSION,
        id,
        line,
        failed_stage,
        error,
    }
}

/// Parses corpus lines, turning malformed and duplicate entries into error
/// records. Blank lines are skipped.
fn parse_corpus(text: &str) -> Vec<Parsed> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TaskInput>(line) {
            Ok(task) if !seen.insert(task.id.clone()) => out.push(Parsed::Bad(error_record(
                line_no,
                Some(task.id.clone()),
                None,
                format!("duplicate id `{}`", task.id),
            ))),
            Ok(task) => out.push(Parsed::Task(line_no, task)),
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|id| id.as_str()).map(str::to_string));
                out.push(Parsed::Bad(error_record(line_no, id, None, format!("malformed input: {e}"))));
            }
        }
    }
    out
}

/// Runs every corpus line on a pool of `workers` threads. Outcomes come back
/// in corpus order whatever the worker count.
pub fn run_corpus(corpus: &str, cfg: &PipelineConfig, backends: Backends<'_>, workers: usize) -> Result<Vec<Outcome>> {
    let parsed = parse_corpus(corpus);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .context("starting worker pool")?;
    Ok(pool.install(|| {
        parsed
            .into_par_iter()
            .map(|item| match item {
                Parsed::Bad(error) => {
                    warn!(line = error.line, "{}", error.error);
                    Outcome::Error(error)
                }
                Parsed::Task(line, task) => match run_pipeline(&task, cfg, backends) {
                    Ok(record) => Outcome::Run(Box::new(record)),
                    Err(failure) => {
                        warn!(id = %task.id, "{failure}");
                        Outcome::Error(error_record(
                            line,
                            Some(task.id),
                            Some(failure.stage),
                            failure.error.to_string(),
                        ))
                    }
                },
            })
            .collect()
    }))
}

/// Writes outcomes as JSONL through a single writer.
pub fn write_outcomes(path: &Path, outcomes: &[Outcome]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut writer = BufWriter::new(file);
    for outcome in outcomes {
        writeln!(writer, "{}", outcome.to_json_line()?)?;
    }
    writer.flush().with_context(|| format!("writing {}", path.display()))
}

/// Sidecar path next to `out`, e.g. `runs.jsonl` -> `runs.jsonl.report.json`.
pub fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    out.with_file_name(name)
}

/// Runs the corpus and writes the run file plus `.report.json` and
/// `.report.txt` sidecars holding call counts and latencies.
pub fn cmd_run(opts: &RunOptions) -> Result<RunSummary> {
    let cfg = resolve_config(&opts.config, &opts.overrides)?;
    let corpus = std::fs::read_to_string(&opts.corpus)
        .with_context(|| format!("reading corpus {}", opts.corpus.display()))?;
    let backends = build_backends(&cfg)?;
    let outcomes = run_corpus(
        &corpus,
        &cfg,
        Backends {
            llm: backends.llm.as_ref(),
            search: backends.search.as_ref(),
        },
        opts.workers,
    )?;
    write_outcomes(&opts.out, &outcomes)?;

    let summary = RunSummary::from_outcomes(&outcomes);
    let report = sidecar(&opts.out, ".report.json");
    std::fs::write(&report, serde_json::to_string_pretty(&summary)?)
        .with_context(|| format!("writing {}", report.display()))?;
    let table = sidecar(&opts.out, ".report.txt");
    std::fs::write(&table, summary.latency.to_table()).with_context(|| format!("writing {}", table.display()))?;
    info!(
        total = summary.total,
        succeeded = summary.succeeded,
        failed = summary.failed,
        "run finished"
    );
    Ok(summary)
}
