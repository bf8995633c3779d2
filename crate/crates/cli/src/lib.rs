//! Command-line front end: `mixkg train | eval | sweep | inspect`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (missing or malformed files, vocabulary mismatch, bad checkpoint),
//! 3 numeric failure during training.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::{EvalArgs, Split, SweepKey};
use config::Settings;

/// Error in the input data rather than in the configuration.
#[derive(Debug)]
pub struct DataError(String);

impl DataError {
    pub fn msg(m: impl Into<String>) -> Self {
        DataError(m.into())
    }
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DataError {}

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Maps an error chain onto the documented exit codes.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<DataError>() || cause.is::<std::io::Error>() {
            return EXIT_DATA;
        }
        if let Some(e) = cause.downcast_ref::<mixkg::Error>() {
            return match e {
                mixkg::Error::Io { .. } | mixkg::Error::Parse { .. } | mixkg::Error::Format(_) => EXIT_DATA,
                mixkg::Error::Numeric(_) | mixkg::Error::Sampling(_) | mixkg::Error::DegenerateSet(_) => EXIT_NUMERIC,
                mixkg::Error::InvalidArgument(_) => EXIT_USAGE,
            };
        }
    }
    EXIT_USAGE
}

#[derive(Debug, Parser)]
#[command(name = "mixkg", version, about = "Knowledge-graph embeddings trained with mixed hard negatives")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoints and metrics
    Train(RunArgs),
    /// Filtered MRR / Hits@K of a checkpoint
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        /// Also write the JSON report here
        #[arg(long)]
        report: Option<PathBuf>,
        /// Per-triplet ranks as CSV
        #[arg(long)]
        ranks_csv: Option<PathBuf>,
    },
    /// Train once per value of K or N and write a CSV of results
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        key: SweepKey,
        /// Comma-separated values
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<usize>,
    },
    /// Dump candidate, hard-set and mixing details as JSON lines
    Inspect {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
}

/// Flags shared by every command; each overrides one config key.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// key=value config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<String>,
    #[arg(long)]
    pub valid: Option<String>,
    #[arg(long)]
    pub test: Option<String>,
    #[arg(long, value_parser = ["transe", "rotate", "distmult", "complex"])]
    pub family: Option<String>,
    #[arg(long, value_parser = ["l1", "l2"])]
    pub norm: Option<String>,
    #[arg(long, value_parser = ["sf", "ces", "random", "uniform"])]
    pub criterion: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub neg_m: Option<usize>,
    #[arg(long)]
    pub hard_k: Option<usize>,
    #[arg(long)]
    pub mix_n: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Single-threaded execution
    #[arg(long)]
    pub deterministic: bool,
    /// Output directory
    #[arg(long)]
    pub out: Option<String>,
}

impl RunArgs {
    /// Defaults, then the config file, then explicit flags.
    pub fn settings(&self) -> Result<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            s.apply_file(path)?;
        }
        let pairs: [(&str, Option<String>); 18] = [
            ("dataset.train", self.train.clone()),
            ("dataset.valid", self.valid.clone()),
            ("dataset.test", self.test.clone()),
            ("model.family", self.family.clone()),
            ("model.norm", self.norm.clone()),
            ("train.criterion", self.criterion.clone()),
            ("model.dim", self.dim.map(|v| v.to_string())),
            ("model.gamma", self.gamma.map(|v| v.to_string())),
            ("train.batch_size", self.batch_size.map(|v| v.to_string())),
            ("train.m", self.neg_m.map(|v| v.to_string())),
            ("train.k", self.hard_k.map(|v| v.to_string())),
            ("train.n", self.mix_n.map(|v| v.to_string())),
            ("train.lr", self.lr.map(|v| v.to_string())),
            ("train.epochs", self.epochs.map(|v| v.to_string())),
            ("train.eval_every", self.eval_every.map(|v| v.to_string())),
            ("train.seed", self.seed.map(|v| v.to_string())),
            ("train.threads", self.threads.map(|v| v.to_string())),
            ("output.dir", self.out.clone()),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                s.set(key, v)?;
            }
        }
        if self.deterministic {
            s.set("train.deterministic", "true")?;
        }
        Ok(s)
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(run) => {
            let summary = commands::cmd_train(&run.settings()?)?;
            if let Some(v) = &summary.valid {
                println!(
                    "best epoch {}: valid MRR {:.4} Hits@10 {:.4}",
                    summary.best_epoch,
                    v.mrr,
                    v.hits_at(10).unwrap_or(0.0)
                );
            }
            if let Some(t) = &summary.test {
                println!("test MRR {:.4} Hits@10 {:.4}", t.mrr, t.hits_at(10).unwrap_or(0.0));
            }
        }
        Command::Eval {
            run,
            checkpoint,
            split,
            report,
            ranks_csv,
        } => {
            let args = EvalArgs {
                checkpoint,
                split,
                report,
                ranks_csv,
            };
            let report = commands::cmd_eval(&run.settings()?, &args)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Sweep { run, key, values } => {
            let rows = commands::cmd_sweep(&run.settings()?, key, &values)?;
            for r in rows {
                println!("{}: MRR {:.4} Hits@10 {:.4}", r.value, r.mrr, r.hits10);
            }
        }
        Command::Inspect { run, checkpoint, count } => {
            let stdout = std::io::stdout();
            commands::cmd_inspect(&run.settings()?, &checkpoint, count, &mut stdout.lock())?;
        }
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
