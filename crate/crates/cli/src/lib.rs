//! Batch driver for the correction pipeline: corpus runs, scoring, the
//! call-count table and cache inspection.

pub mod backends;
pub mod eval;
pub mod run;
pub mod settings;

use std::path::Path;

use anyhow::Result;
use rac_core::accounting::{cost_table, CostModel, Method};
use rac_core::cache::{CacheStats, DiskCache};

pub use eval::{cmd_eval, EvalMetric, EvalOptions, EvalSummary};
pub use run::{cmd_run, ErrorRecord, RunOptions, RunSummary};

/// Predicted calls for `method` with a RAC row for comparison.
pub fn cmd_cost(method: &str, sentences: u32, questions_per_sentence: u32) -> Result<String> {
    let method: Method = method.parse()?;
    let model = CostModel::new(method, sentences, questions_per_sentence)?;
    Ok(cost_table(&model))
}

/// Entry counts of a cache directory, optionally with every entry path.
pub fn cmd_cache_inspect(dir: &Path, list: bool) -> Result<(CacheStats, Vec<String>)> {
    let cache = DiskCache::open(dir, false)?;
    let stats = cache.stats()?;
    let paths = if list {
        cache
            .entry_paths()?
            .into_iter()
            .map(|p| p.display().to_string())
            .collect()
    } else {
        Vec::new()
    };
    Ok((stats, paths))
}
