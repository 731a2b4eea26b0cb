//! Scoring of pipeline outputs: n-gram similarity metrics, the
//! correct-versus-incorrect answer accuracy rule and fact-level judging.

mod factscore;
mod metrics;
mod truthfulqa;

use thiserror::Error;

pub use factscore::{
    factuality_score, split_sentences, AlwaysSupported, FactJudge, FactualityScore, JudgedFact, LlmJudge,
    SubstringJudge,
};
pub use metrics::{bleu, metric_by_name, rouge1_f, tokenize, Bleu, Rouge1, SimilarityMetric};
pub use truthfulqa::{best_score, record_correct, truthfulqa_accuracy, QARecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("text to score is empty")]
    EmptyText,
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("output has no facts to judge")]
    NoFacts,
    #[error("judge unavailable: {0}")]
    JudgeUnavailable(String),
}
