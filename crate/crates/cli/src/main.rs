use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use rac_cli::backends::DEFAULT_CACHE_DIR;
use rac_cli::settings::ENV_CACHE_DIR;
use rac_cli::{cmd_cache_inspect, cmd_cost, cmd_eval, cmd_run, EvalMetric, EvalOptions, RunOptions};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "rac", version, about = "Retrieval augmented correction of model answers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline over a JSONL corpus.
    Run(Box<RunCmd>),
    /// Score run records against a dataset.
    Eval(EvalCmd),
    /// Print predicted generation and retrieval calls for a method.
    Cost {
        /// RARR, CRITIC, EVER or RAC.
        method: String,
        /// Sentences in the generated answer.
        #[arg(long = "n-s", default_value_t = 1)]
        sentences: u32,
        /// Questions per sentence (RARR).
        #[arg(long = "n-q", default_value_t = 1)]
        questions: u32,
    },
    /// Summarize a cache directory.
    CacheInspect {
        #[arg(long, env = ENV_CACHE_DIR, default_value = DEFAULT_CACHE_DIR)]
        dir: PathBuf,
        /// List every entry file.
        #[arg(long)]
        list: bool,
    },
}

/// Typed mirrors of the config fields. Each one becomes a `key=value`
/// override applied before `--set`.
#[derive(Args)]
struct ConfigFlags {
    #[arg(long)]
    use_rag: Option<bool>,
    #[arg(long)]
    use_verification: Option<bool>,
    /// correct_all or verify_then_correct_false.
    #[arg(long)]
    correction_strategy: Option<String>,
    /// keep or drop.
    #[arg(long)]
    nm_policy: Option<String>,
    #[arg(long)]
    kat: Option<bool>,
    #[arg(long)]
    context_budget: Option<usize>,
    #[arg(long)]
    top_k_results: Option<usize>,
    #[arg(long)]
    shortqa_result_units: Option<usize>,
    #[arg(long)]
    max_facts: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    leak_domains: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    section_stop_list: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    secondary_stop_list: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    encyclopedia_hosts: Option<Vec<String>>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    cache: Option<bool>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Call backends even when a cached response exists.
    #[arg(long)]
    cache_bypass: bool,
    /// Any config key, dotted for nested tables: `--set backends.judge=llm`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn toml_list(items: &[String]) -> String {
    let quoted: Vec<String> = items.iter().map(|s| format!("{s:?}")).collect();
    format!("[{}]", quoted.join(", "))
}

impl ConfigFlags {
    fn overrides(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                out.push(format!("{key}={v}"));
            }
        };
        push("use_rag", self.use_rag.map(|v| v.to_string()));
        push("use_verification", self.use_verification.map(|v| v.to_string()));
        push("correction_strategy", self.correction_strategy.clone());
        push("nm_policy", self.nm_policy.clone());
        push("kat", self.kat.map(|v| v.to_string()));
        push("context_budget", self.context_budget.map(|v| v.to_string()));
        push("top_k_results", self.top_k_results.map(|v| v.to_string()));
        push("shortqa_result_units", self.shortqa_result_units.map(|v| v.to_string()));
        push("max_facts", self.max_facts.map(|v| v.to_string()));
        push("leak_domains", self.leak_domains.as_deref().map(toml_list));
        push("section_stop_list", self.section_stop_list.as_deref().map(toml_list));
        push("secondary_stop_list", self.secondary_stop_list.as_deref().map(toml_list));
        push("encyclopedia_hosts", self.encyclopedia_hosts.as_deref().map(toml_list));
        push("sampling.top_p", self.top_p.map(|v| format!("{v:?}")));
        push("backends.cache.enabled", self.cache.map(|v| v.to_string()));
        push("backends.cache.dir", self.cache_dir.as_ref().map(|d| format!("{:?}", d.display().to_string())));
        push("backends.cache.bypass", self.cache_bypass.then(|| "true".to_string()));
        out.extend(self.set.iter().cloned());
        out
    }
}

#[derive(Args)]
struct RunCmd {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Args)]
struct EvalCmd {
    #[arg(long)]
    runs: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated: bleu_acc, rouge1_acc, factscore.
    #[arg(long, value_delimiter = ',', default_value = "bleu_acc,rouge1_acc")]
    metrics: Vec<EvalMetric>,
    /// Summary JSON; per-record CSV is written alongside with a .csv suffix.
    #[arg(long)]
    out: PathBuf,
    /// Config selecting the fact judge for factscore.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(cmd) => {
            let summary = cmd_run(&RunOptions {
                corpus: cmd.corpus,
                config: cmd.config,
                out: cmd.out,
                workers: cmd.workers,
                overrides: cmd.flags.overrides(),
            })?;
            println!("{} of {} inputs succeeded", summary.succeeded, summary.total);
            Ok(if summary.succeeded > 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Eval(cmd) => {
            let summary = cmd_eval(&EvalOptions {
                runs: cmd.runs,
                dataset: cmd.dataset,
                metrics: cmd.metrics,
                out: cmd.out,
                config: cmd.config,
                overrides: cmd.set,
            })?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Cost {
            method,
            sentences,
            questions,
        } => {
            print!("{}", cmd_cost(&method, sentences, questions)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::CacheInspect { dir, list } => {
            let (stats, paths) = cmd_cache_inspect(&dir, list)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
            for path in paths {
                println!("{path}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
