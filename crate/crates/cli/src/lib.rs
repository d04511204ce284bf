//! The `stormstack` command line: generate → featurize → train → evaluate →
//! predict, plus `report` to merge saved evaluations.
//!
//! Every subcommand works inside one run directory (`--out`, default `run`)
//! and echoes its fully resolved configuration to `<out>/<subcommand>.log`.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use stormstack::features::EventClass;
use stormstack::{Error, ErrorKind, Result};

pub use config::{parse_baselines, Baseline, RunConfig};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "STORMSTACK_THREADS";

#[derive(Debug, Parser)]
#[command(name = "stormstack", version, about = "Severe-weather event classification pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// `key=value` config file applied over the defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// One seed for generation, splits, initialization and shuffling.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Run directory holding every input and output.
    #[arg(long, global = true, value_name = "DIR", default_value = "run")]
    pub out: PathBuf,
    /// Comma-separated subset of knn,rnn,lstm,bilstm, or `none`.
    #[arg(long, global = true, value_name = "LIST")]
    pub baselines: Option<String>,
    /// Class whose one-vs-rest metrics head the report (0 tornado, 1 hail, 2 wind).
    #[arg(long = "positive-class", global = true, value_name = "N")]
    pub positive_class: Option<usize>,
    /// Sequence file for `predict` (default `<out>/test.csv`).
    #[arg(long, global = true, value_name = "PATH")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write synthetic raw events and volumes.
    Generate,
    /// Extract statistics, smooth, balance and split into sequence files.
    Featurize,
    /// Train the main model and network baselines.
    Train,
    /// Score models on the test split.
    Evaluate,
    /// Write per-sample class probabilities.
    Predict,
    /// Merge saved evaluations into one table.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Featurize => "featurize",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Predict => "predict",
            Command::Report => "report",
        }
    }
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(list) = &cli.baselines {
        cfg.baselines = parse_baselines(list)?;
    }
    if let Some(p) = cli.positive_class {
        cfg.positive_class = EventClass::from_index(p).map_err(|e| Error::Usage(e.to_string()))?;
    }
    cfg.resolve()
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Usage(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    // A pool that already exists (repeated in-process runs) is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs one parsed invocation. Returns what the command reports on stdout.
pub fn execute(cli: &Cli) -> Result<String> {
    configure_threads()?;
    let cfg = resolve_config(cli)?;
    let out = &cli.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let summary = match cli.command {
        Command::Generate => commands::generate(&cfg, out)?,
        Command::Featurize => commands::featurize_run(&cfg, out)?,
        Command::Train => commands::train_run(&cfg, out)?,
        Command::Evaluate => commands::evaluate_run(&cfg, out)?.render_table(),
        Command::Predict => commands::predict_run(out, cli.input.as_deref())?,
        Command::Report => commands::report_run(out)?.render_table(),
    };
    let log_path = out.join(format!("{}.log", cli.command.name()));
    let mut log = format!("# stormstack {}\n", cli.command.name());
    log.push_str(&cfg.echo());
    for line in summary.lines() {
        log.push_str(&format!("# {line}\n"));
    }
    fs::write(&log_path, log).map_err(|e| Error::io(&log_path, e))?;
    Ok(summary)
}

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
    }
}

/// Full command-line entry point: parses `args`, runs, prints, and returns
/// the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let first = e.to_string();
            let line = first.lines().next().unwrap_or("invalid arguments");
            eprintln!("stormstack: {}", line.trim_start_matches("error: "));
            return 1;
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            print!("{summary}");
            if !summary.ends_with('\n') {
                println!();
            }
            0
        }
        Err(e) => {
            eprintln!("stormstack: {}", e.to_string().replace('\n', " "));
            exit_code(e.kind())
        }
    }
}
