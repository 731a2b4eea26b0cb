//! Call ledger, the analytical call-count model of post-correction methods,
//! and measured-latency reporting.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{self, LlmBackend, LlmError, PromptRequest, TemplateId};
use crate::retrieval::{RetrievalError, SearchBackend};

#[derive(Debug, Error, PartialEq)]
pub enum AccountingError {
    #[error("baseline wall clock is zero")]
    ZeroBaseline,
    #[error("unknown method `{0}` (expected one of RARR, CRITIC, EVER, RAC)")]
    UnknownMethod(String),
    #[error("invalid cost-model parameter: {0}")]
    InvalidParameter(String),
}

/// Pipeline stage that issued a call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Retrieve,
    Generate,
    Extract,
    Verify,
    Correct,
    Revise,
    Judge,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Retrieve => "retrieve",
            Stage::Generate => "generate",
            Stage::Extract => "extract",
            Stage::Verify => "verify",
            Stage::Correct => "correct",
            Stage::Revise => "revise",
            Stage::Judge => "judge",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    Generation,
    Retrieval,
}

/// Logical call counts of one stage. Cache hits count as calls here; the
/// pipeline issued them regardless of where the answer came from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub generation_calls: u32,
    pub retrieval_calls: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallTiming {
    pub stage: Stage,
    pub kind: CallKind,
    pub duration: Duration,
    pub cache_hit: bool,
}

/// Per-run tally of generation and retrieval calls.
///
/// Only the counters are serialized; timings and cache hits vary between
/// otherwise identical runs and are reported separately.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CallLedger {
    pub stages: BTreeMap<Stage, StageCounts>,
    #[serde(skip)]
    pub calls: Vec<CallTiming>,
    #[serde(skip)]
    pub wall_clock_total: Duration,
}

impl CallLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, stage: Stage, kind: CallKind, duration: Duration, cache_hit: bool) {
        let counts = self.stages.entry(stage).or_default();
        match kind {
            CallKind::Generation => counts.generation_calls += 1,
            CallKind::Retrieval => counts.retrieval_calls += 1,
        }
        self.calls.push(CallTiming {
            stage,
            kind,
            duration,
            cache_hit,
        });
    }

    pub fn stage(&self, stage: Stage) -> StageCounts {
        self.stages.get(&stage).copied().unwrap_or_default()
    }

    pub fn generation_calls(&self) -> u32 {
        self.stages.values().map(|c| c.generation_calls).sum()
    }

    pub fn retrieval_calls(&self) -> u32 {
        self.stages.values().map(|c| c.retrieval_calls).sum()
    }

    /// Calls that actually reached a backend (cache misses), by kind.
    pub fn backend_calls(&self, kind: CallKind) -> usize {
        self.calls
            .iter()
            .filter(|c| c.kind == kind && !c.cache_hit)
            .count()
    }

    pub fn cache_hits(&self) -> usize {
        self.calls.iter().filter(|c| c.cache_hit).count()
    }

    pub fn max_call_duration(&self) -> Duration {
        self.calls
            .iter()
            .map(|c| c.duration)
            .max()
            .unwrap_or_default()
    }

    pub fn stage_duration(&self, stage: Stage) -> Duration {
        self.calls
            .iter()
            .filter(|c| c.stage == stage)
            .map(|c| c.duration)
            .sum()
    }

    /// Sets the wall clock, clamped so it never undercuts a single call.
    pub fn set_wall_clock(&mut self, total: Duration) {
        self.wall_clock_total = total.max(self.max_call_duration());
    }

    /// Sub-ledger restricted to `stages`; its wall clock is the summed call
    /// time of those stages.
    pub fn restricted(&self, stages: &[Stage]) -> CallLedger {
        let mut out = CallLedger::new();
        for call in self.calls.iter().filter(|c| stages.contains(&c.stage)) {
            out.record(call.stage, call.kind, call.duration, call.cache_hit);
        }
        let total = out.calls.iter().map(|c| c.duration).sum();
        out.set_wall_clock(total);
        out
    }

    /// Folds `other` into `self`. Counter merging is associative and
    /// commutative; wall clocks add up as if runs were sequential.
    pub fn merge(&mut self, other: &CallLedger) {
        for (stage, counts) in &other.stages {
            let mine = self.stages.entry(*stage).or_default();
            mine.generation_calls += counts.generation_calls;
            mine.retrieval_calls += counts.retrieval_calls;
        }
        self.calls.extend_from_slice(&other.calls);
        self.wall_clock_total += other.wall_clock_total;
    }
}

/// Measured wall clock of `measured` relative to `baseline`.
pub fn relative_latency(measured: &CallLedger, baseline: &CallLedger) -> Result<f64, AccountingError> {
    if baseline.wall_clock_total.is_zero() {
        return Err(AccountingError::ZeroBaseline);
    }
    Ok(measured.wall_clock_total.as_secs_f64() / baseline.wall_clock_total.as_secs_f64())
}

/// Post-correction methods with a known call-count model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Rarr,
    Critic,
    Ever,
    Rac,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Rarr, Method::Critic, Method::Ever, Method::Rac];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Rarr => "RARR",
            Method::Critic => "CRITIC",
            Method::Ever => "EVER",
            Method::Rac => "RAC",
        })
    }
}

impl FromStr for Method {
    type Err = AccountingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rarr" => Ok(Method::Rarr),
            "critic" => Ok(Method::Critic),
            "ever" => Ok(Method::Ever),
            "rac" => Ok(Method::Rac),
            _ => Err(AccountingError::UnknownMethod(s.to_string())),
        }
    }
}

/// A method plus the sizes its call counts depend on: `sentences` generated
/// sentences and `questions_per_sentence` (RARR only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub method: Method,
    pub sentences: u32,
    pub questions_per_sentence: u32,
}

impl CostModel {
    pub fn new(method: Method, sentences: u32, questions_per_sentence: u32) -> Result<Self, AccountingError> {
        if sentences == 0 {
            return Err(AccountingError::InvalidParameter(
                "number of sentences must be at least 1".into(),
            ));
        }
        if method == Method::Rarr && questions_per_sentence == 0 {
            return Err(AccountingError::InvalidParameter(
                "RARR needs at least one question per sentence".into(),
            ));
        }
        Ok(Self {
            method,
            sentences,
            questions_per_sentence,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedCalls {
    pub generation_calls: u32,
    pub search_queries_per_unit: u32,
    pub correction_iterations: u32,
    pub total_retrieval_calls: u32,
}

pub fn predicted_calls(model: &CostModel) -> PredictedCalls {
    let n_s = model.sentences;
    let n_q = model.questions_per_sentence;
    let (generation_calls, search_queries_per_unit, correction_iterations, total_retrieval_calls) =
        match model.method {
            Method::Rarr => (1, n_q, 1, n_s * n_q),
            Method::Critic => (1, 1, 3, 3),
            Method::Ever => (n_s, 3, 2, 3 * n_s),
            Method::Rac => (1, 1, 1, 1),
        };
    PredictedCalls {
        generation_calls,
        search_queries_per_unit,
        correction_iterations,
        total_retrieval_calls,
    }
}

/// Renders predicted calls for `model`, followed by a RAC row for comparison.
pub fn cost_table(model: &CostModel) -> String {
    let mut rows = vec![(model.method, predicted_calls(model))];
    if model.method != Method::Rac {
        let rac = CostModel::new(Method::Rac, model.sentences, model.questions_per_sentence)
            .expect("RAC accepts any sentence count already accepted");
        rows.push((Method::Rac, predicted_calls(&rac)));
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:>16} {:>22} {:>22} {:>16}",
        "method", "generation calls", "queries per unit", "correction iterations", "retrieval calls"
    );
    for (method, p) in rows {
        let _ = writeln!(
            out,
            "{:<8} {:>16} {:>22} {:>22} {:>16}",
            method.to_string(),
            p.generation_calls,
            p.search_queries_per_unit,
            p.correction_iterations,
            p.total_retrieval_calls
        );
    }
    out
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

/// Issues the call pattern predicted for `model` against real backends and
/// returns the resulting ledger. Used to compare methods under identical
/// per-call latency.
pub fn replay_cost_model(
    model: &CostModel,
    llm: &dyn LlmBackend,
    search: &dyn SearchBackend,
    query: &str,
) -> Result<CallLedger, ReplayError> {
    let predicted = predicted_calls(model);
    let mut ledger = CallLedger::new();
    let started = Instant::now();
    for _ in 0..predicted.generation_calls {
        let req = PromptRequest::new(TemplateId::PlainAnswer).slot("question", query);
        llm::complete(llm, &req, &mut ledger, Stage::Generate)?;
    }
    for _ in 0..predicted.total_retrieval_calls {
        let call_start = Instant::now();
        let response = search.search(query, 1)?;
        ledger.record(
            Stage::Retrieve,
            CallKind::Retrieval,
            call_start.elapsed(),
            response.cached,
        );
    }
    ledger.set_wall_clock(started.elapsed());
    Ok(ledger)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub generation_calls: u32,
    pub retrieval_calls: u32,
    pub total_ms: f64,
}

/// Aggregate call and latency figures for a batch of runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub runs: usize,
    pub generation_calls: u32,
    pub retrieval_calls: u32,
    pub backend_generation_calls: usize,
    pub backend_retrieval_calls: usize,
    pub cache_hits: usize,
    pub wall_clock_ms: f64,
    pub stages: BTreeMap<Stage, StageReport>,
    /// Mean of each run's wall clock over its retrieve+generate time, the
    /// cost of plain RAG without correction. Absent when that time is zero.
    pub mean_relative_latency_vs_rag: Option<f64>,
}

impl LatencyReport {
    pub fn from_ledgers<'a>(ledgers: impl IntoIterator<Item = &'a CallLedger>) -> Self {
        let mut total = CallLedger::new();
        let mut ratios = Vec::new();
        let mut runs = 0;
        for ledger in ledgers {
            runs += 1;
            total.merge(ledger);
            let baseline = ledger.restricted(&[Stage::Retrieve, Stage::Generate]);
            if let Ok(ratio) = relative_latency(ledger, &baseline) {
                ratios.push(ratio);
            }
        }
        let stages = total
            .stages
            .iter()
            .map(|(stage, counts)| {
                (
                    *stage,
                    StageReport {
                        generation_calls: counts.generation_calls,
                        retrieval_calls: counts.retrieval_calls,
                        total_ms: total.stage_duration(*stage).as_secs_f64() * 1e3,
                    },
                )
            })
            .collect();
        Self {
            runs,
            generation_calls: total.generation_calls(),
            retrieval_calls: total.retrieval_calls(),
            backend_generation_calls: total.backend_calls(CallKind::Generation),
            backend_retrieval_calls: total.backend_calls(CallKind::Retrieval),
            cache_hits: total.cache_hits(),
            wall_clock_ms: total.wall_clock_total.as_secs_f64() * 1e3,
            stages,
            mean_relative_latency_vs_rag: (!ratios.is_empty())
                .then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
        }
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>12} {:>12} {:>12}", "stage", "gen calls", "retrievals", "time (ms)");
        for (stage, s) in &self.stages {
            let _ = writeln!(
                out,
                "{:<10} {:>12} {:>12} {:>12.1}",
                stage.to_string(),
                s.generation_calls,
                s.retrieval_calls,
                s.total_ms
            );
        }
        let _ = writeln!(
            out,
            "{:<10} {:>12} {:>12} {:>12.1}",
            "total", self.generation_calls, self.retrieval_calls, self.wall_clock_ms
        );
        let _ = writeln!(
            out,
            "runs: {}  backend calls: {} generation, {} retrieval  cache hits: {}",
            self.runs, self.backend_generation_calls, self.backend_retrieval_calls, self.cache_hits
        );
        if let Some(ratio) = self.mean_relative_latency_vs_rag {
            let _ = writeln!(out, "latency relative to uncorrected RAG: {ratio:.2}x");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(method: Method, n_s: u32, n_q: u32) -> PredictedCalls {
        predicted_calls(&CostModel::new(method, n_s, n_q).unwrap())
    }

    #[test]
    fn call_counts_per_method() {
        assert_eq!(model(Method::Rarr, 10, 3).total_retrieval_calls, 30);
        assert_eq!(model(Method::Rarr, 10, 3).search_queries_per_unit, 3);
        assert_eq!(model(Method::Ever, 5, 1).total_retrieval_calls, 15);
        assert_eq!(model(Method::Ever, 5, 1).generation_calls, 5);
        assert_eq!(model(Method::Critic, 7, 1).correction_iterations, 3);
        assert_eq!(
            model(Method::Rac, 42, 9),
            PredictedCalls {
                generation_calls: 1,
                search_queries_per_unit: 1,
                correction_iterations: 1,
                total_retrieval_calls: 1
            }
        );
    }

    #[test]
    fn method_parsing() {
        assert_eq!("ever".parse::<Method>().unwrap(), Method::Ever);
        assert_eq!("RAC".parse::<Method>().unwrap(), Method::Rac);
        assert!(matches!(
            "FOO".parse::<Method>(),
            Err(AccountingError::UnknownMethod(_))
        ));
        assert!(CostModel::new(Method::Rac, 0, 1).is_err());
        assert!(CostModel::new(Method::Rarr, 3, 0).is_err());
    }

    #[test]
    fn relative_latency_guards_zero_baseline() {
        let mut a = CallLedger::new();
        a.set_wall_clock(Duration::from_millis(40));
        assert_eq!(relative_latency(&a, &a).unwrap(), 1.0);
        assert_eq!(
            relative_latency(&a, &CallLedger::new()),
            Err(AccountingError::ZeroBaseline)
        );
    }

    #[test]
    fn wall_clock_never_below_longest_call() {
        let mut l = CallLedger::new();
        l.record(Stage::Generate, CallKind::Generation, Duration::from_millis(9), false);
        l.set_wall_clock(Duration::from_millis(1));
        assert_eq!(l.wall_clock_total, Duration::from_millis(9));
    }

    #[test]
    fn serialized_ledger_carries_only_counts() {
        let mut l = CallLedger::new();
        l.record(Stage::Retrieve, CallKind::Retrieval, Duration::from_millis(3), false);
        l.record(Stage::Verify, CallKind::Generation, Duration::from_millis(5), true);
        let json = serde_json::to_string(&l).unwrap();
        assert_eq!(
            json,
            r#"{"stages":{"retrieve":{"generation_calls":0,"retrieval_calls":1},"verify":{"generation_calls":1,"retrieval_calls":0}}}"#
        );
        assert_eq!(l.backend_calls(CallKind::Generation), 0);
        assert_eq!(l.cache_hits(), 1);
    }

    #[test]
    fn cost_table_lists_rac_for_comparison() {
        let table = cost_table(&CostModel::new(Method::Ever, 5, 1).unwrap());
        let lines: Vec<_> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("EVER") && lines[1].trim_end().ends_with("15"));
        assert!(lines[2].starts_with("RAC"));
    }

    fn arb_ledger() -> impl Strategy<Value = CallLedger> {
        proptest::collection::vec((0usize..7, any::<bool>(), 0u64..50), 0..12).prop_map(|calls| {
            let stages = [
                Stage::Retrieve,
                Stage::Generate,
                Stage::Extract,
                Stage::Verify,
                Stage::Correct,
                Stage::Revise,
                Stage::Judge,
            ];
            let mut l = CallLedger::new();
            for (s, gen, ms) in calls {
                let kind = if gen { CallKind::Generation } else { CallKind::Retrieval };
                l.record(stages[s], kind, Duration::from_millis(ms), false);
            }
            l
        })
    }

    proptest! {
        #[test]
        fn merge_counters_commute_and_associate(a in arb_ledger(), b in arb_ledger(), c in arb_ledger()) {
            let mut ab = a.clone(); ab.merge(&b);
            let mut ba = b.clone(); ba.merge(&a);
            prop_assert_eq!(&ab.stages, &ba.stages);
            let mut ab_c = ab.clone(); ab_c.merge(&c);
            let mut bc = b.clone(); bc.merge(&c);
            let mut a_bc = a.clone(); a_bc.merge(&bc);
            prop_assert_eq!(&ab_c.stages, &a_bc.stages);
        }

        #[test]
        fn predicted_calls_monotone(n_s in 1u32..50, n_q in 1u32..10) {
            for method in Method::ALL {
                let base = model(method, n_s, n_q);
                let more_s = model(method, n_s + 1, n_q);
                let more_q = model(method, n_s, n_q + 1);
                prop_assert!(more_s.total_retrieval_calls >= base.total_retrieval_calls);
                prop_assert!(more_s.generation_calls >= base.generation_calls);
                prop_assert!(more_q.total_retrieval_calls >= base.total_retrieval_calls);
                prop_assert!(more_q.search_queries_per_unit >= base.search_queries_per_unit);
            }
        }
    }
}
