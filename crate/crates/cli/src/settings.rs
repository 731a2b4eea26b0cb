//! Loading a [`PipelineConfig`] from TOML plus command-line overrides.
//!
//! Every override is a dotted `key=value` pair applied to the serialized
//! config, where `value` is a TOML literal (`true`, `3`, `["a", "b"]`) or a
//! bare string. The typed flags of the `run` command are turned into the same
//! pairs, so both spellings behave identically.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rac_core::config::{validate_config, LlmBackendConfig, PipelineConfig, SearchBackendConfig};
use toml::{Table, Value};

pub const ENV_LLM_ENDPOINT: &str = "RAC_LLM_ENDPOINT";
pub const ENV_SEARCH_ENDPOINT: &str = "RAC_SEARCH_ENDPOINT";
pub const ENV_CACHE_DIR: &str = "RAC_CACHE_DIR";

/// Reads and parses a TOML config file. Relative backend paths are
/// resolved against the file's directory.
pub fn load_config_file(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg: PipelineConfig =
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    resolve_paths(&mut cfg, base);
    Ok(cfg)
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

fn resolve_paths(cfg: &mut PipelineConfig, base: &Path) {
    if let LlmBackendConfig::Mock { script } = &mut cfg.backends.llm {
        resolve(base, script);
    }
    if let SearchBackendConfig::Fixture { dir } = &mut cfg.backends.search {
        resolve(base, dir);
    }
    if let Some(dir) = &mut cfg.backends.cache.dir {
        resolve(base, dir);
    }
}

fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Applies `key=value` assignments to `cfg`.
pub fn apply_overrides(cfg: &PipelineConfig, assignments: &[String]) -> Result<PipelineConfig> {
    if assignments.is_empty() {
        return Ok(cfg.clone());
    }
    let mut table = Table::try_from(cfg).context("serializing config")?;
    for assignment in assignments {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{assignment}` is not of the form key=value"))?;
        let parts: Vec<&str> = key.trim().split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            bail!("override `{assignment}` has an empty key segment");
        }
        let (last, parents) = parts.split_last().expect("split yields at least one part");
        let mut node = &mut table;
        for part in parents {
            let child = node
                .entry(part.to_string())
                .or_insert_with(|| Value::Table(Table::new()));
            node = child
                .as_table_mut()
                .ok_or_else(|| anyhow!("`{part}` in `{key}` is not a table"))?;
        }
        node.insert(last.to_string(), parse_value(raw));
    }
    table
        .try_into()
        .with_context(|| format!("applying overrides {}", assignments.join(", ")))
}

/// Applies endpoint and cache-directory environment variables.
pub fn apply_env(cfg: &mut PipelineConfig, get: impl Fn(&str) -> Option<String>) {
    if let (Some(url), LlmBackendConfig::Http { endpoint, .. }) = (get(ENV_LLM_ENDPOINT), &mut cfg.backends.llm) {
        *endpoint = url;
    }
    if let (Some(url), SearchBackendConfig::Http { endpoint, .. }) =
        (get(ENV_SEARCH_ENDPOINT), &mut cfg.backends.search)
    {
        *endpoint = url;
    }
    if let Some(dir) = get(ENV_CACHE_DIR) {
        cfg.backends.cache.dir = Some(PathBuf::from(dir));
    }
}

/// File, then environment, then overrides, then validation.
pub fn resolve_config(path: &Path, overrides: &[String]) -> Result<PipelineConfig> {
    let mut cfg = load_config_file(path)?;
    apply_env(&mut cfg, |k| std::env::var(k).ok());
    let cfg = apply_overrides(&cfg, overrides)?;
    validate_config(cfg).with_context(|| format!("validating config {}", path.display()))
}
