//! `rac eval`: scoring run records against a dataset joined by id.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use rac_core::eval::{factuality_score, record_correct, Bleu, FactJudge, QARecord, Rouge1, SimilarityMetric};
use rac_core::types::RunRecord;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::backends::build_judge;
use crate::run::sidecar;
use crate::settings::resolve_config;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EvalMetric {
    BleuAcc,
    Rouge1Acc,
    Factscore,
}

impl EvalMetric {
    pub fn name(self) -> &'static str {
        match self {
            EvalMetric::BleuAcc => "bleu_acc",
            EvalMetric::Rouge1Acc => "rouge1_acc",
            EvalMetric::Factscore => "factscore",
        }
    }
}

impl fmt::Display for EvalMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EvalMetric {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bleu_acc" | "bleu" => Ok(EvalMetric::BleuAcc),
            "rouge1_acc" | "rouge" | "rouge1" => Ok(EvalMetric::Rouge1Acc),
            "factscore" => Ok(EvalMetric::Factscore),
            _ => Err(anyhow!("unknown metric `{s}` (expected bleu_acc, rouge1_acc or factscore)")),
        }
    }
}

/// A dataset line. Fields a metric does not need may be absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    #[serde(default)]
    pub question: String,
    #[serde(default)]
    pub correct_answers: Vec<String>,
    #[serde(default)]
    pub incorrect_answers: Vec<String>,
    #[serde(default)]
    pub reference: Option<String>,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub runs: PathBuf,
    pub dataset: PathBuf,
    pub metrics: Vec<EvalMetric>,
    /// Summary JSON; the per-record CSV goes next to it with a `.csv` suffix.
    pub out: PathBuf,
    /// Config supplying the fact judge; the substring judge when absent.
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricSummary {
    /// Absent when no record could be scored.
    pub mean: Option<f64>,
    pub scored: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvalSummary {
    pub records: usize,
    pub metrics: BTreeMap<String, MetricSummary>,
    /// Run ids with no dataset line.
    pub unjoinable_run_ids: Vec<String>,
    /// Dataset ids with no successful run.
    pub dataset_ids_without_run: Vec<String>,
    /// Error records found in the run file.
    pub run_errors: usize,
    pub warnings: Vec<String>,
}

/// Scores of one joined record; `None` where a metric does not apply.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordScores {
    pub id: String,
    pub scores: BTreeMap<EvalMetric, Option<f64>>,
}

fn read_jsonl(path: &Path) -> Result<Vec<(usize, serde_json::Value)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|v| (i + 1, v))
                .with_context(|| format!("{} line {}: invalid JSON", path.display(), i + 1))
        })
        .collect()
}

/// Reads successful runs and counts error records.
pub fn read_runs(path: &Path) -> Result<(Vec<RunRecord>, usize)> {
    let mut runs = Vec::new();
    let mut errors = 0;
    for (line, value) in read_jsonl(path)? {
        if value.get("error").is_some() && value.get("final_output").is_none() {
            errors += 1;
            continue;
        }
        let run: RunRecord = serde_json::from_value(value)
            .with_context(|| format!("{} line {line}: not a run record", path.display()))?;
        runs.push(run);
    }
    Ok((runs, errors))
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    read_jsonl(path)?
        .into_iter()
        .map(|(line, value)| {
            serde_json::from_value(value).with_context(|| format!("{} line {line}: bad dataset record", path.display()))
        })
        .collect()
}

fn accuracy(run: &RunRecord, data: &DatasetRecord, metric: &dyn SimilarityMetric) -> Result<f64, String> {
    if data.correct_answers.is_empty() || data.incorrect_answers.is_empty() {
        return Err(format!("`{}` lacks correct or incorrect answers", data.id));
    }
    let record = QARecord {
        question: data.question.clone(),
        correct_answers: data.correct_answers.clone(),
        incorrect_answers: data.incorrect_answers.clone(),
        prediction: run.final_output.clone(),
    };
    Ok(if record_correct(&record, metric) { 1.0 } else { 0.0 })
}

fn score_record(
    run: &RunRecord,
    data: &DatasetRecord,
    metrics: &[EvalMetric],
    judge: &dyn FactJudge,
) -> (RecordScores, Vec<String>) {
    let mut warnings = Vec::new();
    let mut scores = BTreeMap::new();
    for &metric in metrics {
        let score = match metric {
            EvalMetric::BleuAcc => accuracy(run, data, &Bleu),
            EvalMetric::Rouge1Acc => accuracy(run, data, &Rouge1),
            EvalMetric::Factscore => match &data.reference {
                None => Err(format!("`{}` has no reference text", data.id)),
                Some(reference) => factuality_score(run, judge, reference)
                    .map(|s| s.score)
                    .map_err(|e| format!("`{}`: {e}", data.id)),
            },
        };
        let score = score
            .map_err(|w| {
                warn!("{metric}: {w}; skipped");
                warnings.push(format!("{metric}: {w}; skipped"));
            })
            .ok();
        scores.insert(metric, score);
    }
    (
        RecordScores {
            id: data.id.clone(),
            scores,
        },
        warnings,
    )
}

/// Joins runs with dataset records by id and scores every joined pair.
pub fn evaluate(
    runs: &[RunRecord],
    dataset: &[DatasetRecord],
    metrics: &[EvalMetric],
    judge: &dyn FactJudge,
) -> (EvalSummary, Vec<RecordScores>) {
    let by_id: HashMap<&str, &DatasetRecord> = dataset.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut summary = EvalSummary::default();
    let mut joined = Vec::new();
    for run in runs {
        match by_id.get(run.input.id.as_str()) {
            Some(data) => joined.push((run, *data)),
            None => summary.unjoinable_run_ids.push(run.input.id.clone()),
        }
    }
    let run_ids: std::collections::HashSet<&str> = runs.iter().map(|r| r.input.id.as_str()).collect();
    summary.dataset_ids_without_run = dataset
        .iter()
        .filter(|d| !run_ids.contains(d.id.as_str()))
        .map(|d| d.id.clone())
        .collect();

    let scored: Vec<(RecordScores, Vec<String>)> = joined
        .par_iter()
        .map(|(run, data)| score_record(run, data, metrics, judge))
        .collect();
    summary.records = scored.len();
    for metric in metrics {
        let values: Vec<f64> = scored.iter().filter_map(|(s, _)| s.scores[metric]).collect();
        summary.metrics.insert(
            metric.name().to_string(),
            MetricSummary {
                mean: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
                scored: values.len(),
            },
        );
    }
    let mut per_record = Vec::with_capacity(scored.len());
    for (scores, warnings) in scored {
        summary.warnings.extend(warnings);
        per_record.push(scores);
    }
    (summary, per_record)
}

pub fn write_csv(path: &Path, metrics: &[EvalMetric], rows: &[RecordScores]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["id".to_string()];
    header.extend(metrics.iter().map(|m| m.name().to_string()));
    writer.write_record(&header)?;
    for row in rows {
        let mut fields = vec![row.id.clone()];
        fields.extend(
            metrics
                .iter()
                .map(|m| row.scores[m].map(|v| v.to_string()).unwrap_or_default()),
        );
        writer.write_record(&fields)?;
    }
    writer.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn cmd_eval(opts: &EvalOptions) -> Result<EvalSummary> {
    if opts.metrics.is_empty() {
        bail!("no metrics requested");
    }
    let judge = match &opts.config {
        Some(path) => build_judge(&resolve_config(path, &opts.overrides)?)?,
        None => Box::new(rac_core::eval::SubstringJudge),
    };
    let (runs, run_errors) = read_runs(&opts.runs)?;
    let dataset = read_dataset(&opts.dataset)?;
    let (mut summary, rows) = evaluate(&runs, &dataset, &opts.metrics, judge.as_ref());
    summary.run_errors = run_errors;
    for id in &summary.unjoinable_run_ids {
        warn!(id, "run has no dataset record; skipped");
    }
    std::fs::write(&opts.out, serde_json::to_string_pretty(&summary)?)
        .with_context(|| format!("writing {}", opts.out.display()))?;
    write_csv(&sidecar(&opts.out, ".csv"), &opts.metrics, &rows)?;
    Ok(summary)
}
