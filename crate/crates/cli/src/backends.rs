//! Construction of live, mock and cached backends from a config.

use std::path::PathBuf;
use std::time::Duration;

use anyhow::{Context, Result};
use rac_core::cache::{CachedLlm, CachedSearch, DiskCache};
use rac_core::config::{CacheConfig, JudgeKind, LlmBackendConfig, PipelineConfig, SearchBackendConfig};
use rac_core::eval::{AlwaysSupported, FactJudge, LlmJudge, SubstringJudge};
use rac_core::llm::{HttpLlm, HttpLlmOptions, LlmBackend, ScriptedLlm};
use rac_core::retrieval::{FixtureSearch, HttpSearch, HttpSearchOptions, SearchBackend};

/// Cache directory used when caching is on and no directory is configured.
pub const DEFAULT_CACHE_DIR: &str = ".rac-cache";

pub struct BackendSet {
    pub llm: Box<dyn LlmBackend>,
    pub search: Box<dyn SearchBackend>,
}

fn open_cache(cfg: &CacheConfig) -> Result<Option<DiskCache>> {
    if !cfg.enabled {
        return Ok(None);
    }
    let dir = cfg.dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR));
    let cache = DiskCache::open(&dir, cfg.bypass).with_context(|| format!("opening cache {}", dir.display()))?;
    Ok(Some(cache))
}

pub fn build_llm(cfg: &LlmBackendConfig) -> Result<Box<dyn LlmBackend>> {
    Ok(match cfg {
        LlmBackendConfig::Http {
            endpoint,
            model,
            api_key_env,
            timeout_secs,
            max_retries,
        } => {
            let mut options = HttpLlmOptions::new(endpoint.clone(), model.clone());
            options.api_key = std::env::var(api_key_env).ok();
            options.timeout = Duration::from_secs(*timeout_secs);
            options.max_retries = *max_retries;
            Box::new(HttpLlm::new(options))
        }
        LlmBackendConfig::Mock { script } => Box::new(ScriptedLlm::from_file(script)?),
    })
}

pub fn build_search(cfg: &SearchBackendConfig) -> Result<Box<dyn SearchBackend>> {
    Ok(match cfg {
        SearchBackendConfig::Http {
            endpoint,
            api_key_env,
            timeout_secs,
            max_retries,
        } => {
            let mut options = HttpSearchOptions::new(endpoint.clone());
            options.api_key = std::env::var(api_key_env).ok();
            options.timeout = Duration::from_secs(*timeout_secs);
            options.max_retries = *max_retries;
            Box::new(HttpSearch::new(options))
        }
        SearchBackendConfig::Fixture { dir } => Box::new(FixtureSearch::load(dir)?),
    })
}

/// Both pipeline backends, wrapped in the disk cache when it is enabled.
pub fn build_backends(cfg: &PipelineConfig) -> Result<BackendSet> {
    let llm = build_llm(&cfg.backends.llm).context("building the model backend")?;
    let search = build_search(&cfg.backends.search).context("building the search backend")?;
    Ok(match open_cache(&cfg.backends.cache)? {
        Some(cache) => BackendSet {
            llm: Box::new(CachedLlm::new(llm, cache.clone())),
            search: Box::new(CachedSearch::new(search, cache)),
        },
        None => BackendSet { llm, search },
    })
}

pub fn build_judge(cfg: &PipelineConfig) -> Result<Box<dyn FactJudge>> {
    Ok(match cfg.backends.judge {
        JudgeKind::Substring => Box::new(SubstringJudge),
        JudgeKind::AlwaysSupported => Box::new(AlwaysSupported),
        JudgeKind::Llm => {
            let llm = build_llm(&cfg.backends.llm).context("building the judge model")?;
            let llm: Box<dyn LlmBackend> = match open_cache(&cfg.backends.cache)? {
                Some(cache) => Box::new(CachedLlm::new(llm, cache)),
                None => llm,
            };
            Box::new(LlmJudge::new(llm, cfg.output_limits.judge))
        }
    })
}
