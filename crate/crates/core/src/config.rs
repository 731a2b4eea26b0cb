//! Pipeline configuration and its validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Mode;

/// Nucleus sampling mass used when the config leaves it unset.
pub const DEFAULT_TOP_P: f64 = 0.3;
pub const DEFAULT_CONTEXT_BUDGET: usize = 3000;
pub const DEFAULT_SHORTQA_RESULT_UNITS: usize = 512;
pub const DEFAULT_MAX_FACTS: usize = 64;
pub const DEFAULT_TOP_K_LONGFORM: usize = 10;
pub const DEFAULT_TOP_K_SHORTQA: usize = 30;

pub const DEFAULT_LEAK_DOMAINS: [&str; 6] = [
    "huggingface",
    "paperswithcode",
    "kaggle",
    "openreview",
    "github",
    "arxiv",
];
pub const DEFAULT_SECTION_STOP_LIST: [&str; 4] =
    ["References", "Footnotes", "Notes and references", "Notes"];
pub const DEFAULT_SECONDARY_STOP_LIST: [&str; 3] =
    ["Filmography", "Production", "Career statistics"];
pub const DEFAULT_ENCYCLOPEDIA_HOSTS: [&str; 1] = ["wikipedia.org"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("contradictory configuration: {0}")]
    Contradictory(String),
    #[error("invalid value for `{field}`: {reason}")]
    InvalidValue { field: &'static str, reason: String },
}

/// How extracted facts are corrected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionStrategy {
    /// Every fact goes through the correction prompt; no verification.
    CorrectAll,
    /// Facts are verified first and only False ones are corrected.
    VerifyThenCorrectFalse,
}

/// Treatment of facts labeled Not Mentioned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmPolicy {
    #[default]
    Keep,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
}

/// Maximum completion length requested from the backend, per stage, in
/// token-equivalent units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputLimits {
    pub answer: usize,
    pub extract: usize,
    pub verify: usize,
    pub correct: usize,
    pub revise: usize,
    pub judge: usize,
}

impl Default for OutputLimits {
    fn default() -> Self {
        Self {
            answer: 1024,
            extract: 1024,
            verify: 512,
            correct: 128,
            revise: 1024,
            judge: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LlmBackendConfig {
    /// Chat-completion style JSON over HTTP.
    Http {
        endpoint: String,
        model: String,
        #[serde(default = "default_llm_key_env")]
        api_key_env: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
        #[serde(default = "default_max_retries")]
        max_retries: u32,
    },
    /// Deterministic scripted responses loaded from a JSON file.
    Mock { script: PathBuf },
}

impl Default for LlmBackendConfig {
    fn default() -> Self {
        LlmBackendConfig::Http {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            api_key_env: default_llm_key_env(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchBackendConfig {
    Http {
        endpoint: String,
        #[serde(default = "default_search_key_env")]
        api_key_env: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
        #[serde(default = "default_max_retries")]
        max_retries: u32,
    },
    /// Offline directory of JSON result files keyed by query hash.
    Fixture { dir: PathBuf },
}

impl Default for SearchBackendConfig {
    fn default() -> Self {
        SearchBackendConfig::Fixture {
            dir: PathBuf::from("search-fixtures"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    #[default]
    Substring,
    AlwaysSupported,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheConfig {
    pub enabled: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub bypass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub llm: LlmBackendConfig,
    pub search: SearchBackendConfig,
    pub judge: JudgeKind,
    pub similarity: String,
    pub cache: CacheConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            llm: LlmBackendConfig::default(),
            search: SearchBackendConfig::default(),
            judge: JudgeKind::default(),
            similarity: "bleu".into(),
            cache: CacheConfig::default(),
        }
    }
}

/// Everything a pipeline run needs to know besides its input.
///
/// Optional fields are resolved by [`validate_config`]; the accessor methods
/// apply the same defaults so an unvalidated config still behaves sensibly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub use_rag: bool,
    /// Defaults to `use_rag`: the non-RAG path corrects every fact unverified.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub use_verification: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correction_strategy: Option<CorrectionStrategy>,
    pub nm_policy: NmPolicy,
    pub kat: bool,
    pub context_budget: usize,
    /// Search depth; unset means 10 for long-form and 30 for short QA.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_k_results: Option<usize>,
    pub shortqa_result_units: usize,
    pub max_facts: usize,
    pub leak_domains: Vec<String>,
    pub section_stop_list: Vec<String>,
    pub secondary_stop_list: Vec<String>,
    pub encyclopedia_hosts: Vec<String>,
    pub sampling: Sampling,
    pub output_limits: OutputLimits,
    pub backends: BackendConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            use_rag: true,
            use_verification: None,
            correction_strategy: None,
            nm_policy: NmPolicy::Keep,
            kat: false,
            context_budget: DEFAULT_CONTEXT_BUDGET,
            top_k_results: None,
            shortqa_result_units: DEFAULT_SHORTQA_RESULT_UNITS,
            max_facts: DEFAULT_MAX_FACTS,
            leak_domains: to_strings(&DEFAULT_LEAK_DOMAINS),
            section_stop_list: to_strings(&DEFAULT_SECTION_STOP_LIST),
            secondary_stop_list: to_strings(&DEFAULT_SECONDARY_STOP_LIST),
            encyclopedia_hosts: to_strings(&DEFAULT_ENCYCLOPEDIA_HOSTS),
            sampling: Sampling::default(),
            output_limits: OutputLimits::default(),
            backends: BackendConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn verification_enabled(&self) -> bool {
        self.use_verification.unwrap_or(self.use_rag)
    }

    pub fn strategy(&self) -> CorrectionStrategy {
        self.correction_strategy.unwrap_or(if self.verification_enabled() {
            CorrectionStrategy::VerifyThenCorrectFalse
        } else {
            CorrectionStrategy::CorrectAll
        })
    }

    pub fn top_p(&self) -> f64 {
        self.sampling.top_p.unwrap_or(DEFAULT_TOP_P)
    }

    pub fn top_k_for(&self, mode: Mode) -> usize {
        self.top_k_results.unwrap_or(match mode {
            Mode::LongForm => DEFAULT_TOP_K_LONGFORM,
            Mode::ShortQa => DEFAULT_TOP_K_SHORTQA,
        })
    }
}

fn to_strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn default_llm_key_env() -> String {
    "RAC_LLM_API_KEY".into()
}

fn default_search_key_env() -> String {
    "RAC_SEARCH_API_KEY".into()
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_retries() -> u32 {
    3
}

/// Fills defaults and rejects combinations that cannot run.
pub fn validate_config(mut cfg: PipelineConfig) -> Result<PipelineConfig, ConfigError> {
    let verification = cfg.verification_enabled();
    let strategy = cfg.strategy();

    match (verification, strategy) {
        (false, CorrectionStrategy::VerifyThenCorrectFalse) => {
            return Err(ConfigError::Contradictory(
                "verify_then_correct_false needs verification labels but use_verification is false"
                    .into(),
            ))
        }
        (true, CorrectionStrategy::CorrectAll) => {
            return Err(ConfigError::Contradictory(
                "correct_all runs on unverified facts but use_verification is true".into(),
            ))
        }
        _ => {}
    }
    if cfg.kat && !verification {
        return Err(ConfigError::Contradictory(
            "kat gates revision on verification labels but use_verification is false".into(),
        ));
    }

    let top_p = cfg.top_p();
    if !(top_p > 0.0 && top_p <= 1.0) {
        return Err(ConfigError::InvalidValue {
            field: "sampling.top_p",
            reason: format!("{top_p} is outside (0, 1]"),
        });
    }
    if cfg.context_budget == 0 {
        return Err(ConfigError::InvalidValue {
            field: "context_budget",
            reason: "must be positive".into(),
        });
    }
    if cfg.top_k_results == Some(0) {
        return Err(ConfigError::InvalidValue {
            field: "top_k_results",
            reason: "must be at least 1".into(),
        });
    }
    if cfg.shortqa_result_units == 0 {
        return Err(ConfigError::InvalidValue {
            field: "shortqa_result_units",
            reason: "must be positive".into(),
        });
    }
    if cfg.max_facts == 0 {
        return Err(ConfigError::InvalidValue {
            field: "max_facts",
            reason: "must be at least 1".into(),
        });
    }

    if crate::eval::metric_by_name(&cfg.backends.similarity).is_err() {
        return Err(ConfigError::InvalidValue {
            field: "backends.similarity",
            reason: format!("unknown metric `{}` (expected bleu or rouge1)", cfg.backends.similarity),
        });
    }

    cfg.use_verification = Some(verification);
    cfg.correction_strategy = Some(strategy);
    cfg.sampling.top_p = Some(top_p);
    Ok(cfg)
}
