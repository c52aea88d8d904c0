//! `rfd-bench`: sketch error, online learning and regret experiments written
//! as CSV files with a JSON manifest per run.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub mod commands;
pub mod output;

#[derive(Debug, Parser)]
#[command(name = "rfd-bench", version, about = "Frequent Directions sketch and online Newton experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", content = "params", rename_all = "kebab-case")]
pub enum Command {
    /// Relative covariance error of FD and RFD for each sketch size.
    SketchBench(SketchBenchArgs),
    /// One online pass per (m, alpha0), then test accuracy of the final weights.
    OnlineBench(OnlineBenchArgs),
    /// Empirical regret against the batch comparator next to the bound.
    RegretCheck(RegretCheckArgs),
    /// Greedy truncation against FD and RFD on the adversarial stream.
    Counterexample(CounterexampleArgs),
    /// Re-run the command recorded in a manifest.
    #[serde(skip)]
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SketchBench(_) => "sketch-bench",
            Command::OnlineBench(_) => "online-bench",
            Command::RegretCheck(_) => "regret-check",
            Command::Counterexample(_) => "counterexample",
            Command::Replay(_) => "replay",
        }
    }
}

/// Where the rows come from: a LIBSVM file or a seeded synthetic stream.
#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct Source {
    /// LIBSVM file, optionally gzip-compressed (`.gz`).
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub dataset: Option<PathBuf>,
    /// Synthetic stream `T:D` or `T:D:RANK`.
    #[arg(long)]
    pub synthetic: Option<Synthetic>,
    /// Feature dimension; defaults to the largest index seen.
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Synthetic {
    pub t: usize,
    pub d: usize,
    pub rank: Option<usize>,
}

impl FromStr for Synthetic {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if !(2..=3).contains(&parts.len()) {
            bail!("expected T:D or T:D:RANK, got {s:?}");
        }
        let num = |p: &str| p.trim().parse::<usize>().with_context(|| format!("bad number {p:?} in {s:?}"));
        let spec = Synthetic {
            t: num(parts[0])?,
            d: num(parts[1])?,
            rank: parts.get(2).map(|p| num(p)).transpose()?,
        };
        if spec.t == 0 || spec.d == 0 || spec.rank == Some(0) {
            bail!("synthetic sizes must be positive, got {s:?}");
        }
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, Default, Args, Serialize, Deserialize)]
pub struct FastFlag {
    /// Buffer up to 2m rows between compressions.
    #[arg(long, overrides_with = "no_fast")]
    pub fast: bool,
    #[arg(long = "no-fast", overrides_with = "fast")]
    #[serde(skip)]
    pub no_fast: bool,
}

impl FastFlag {
    pub fn enabled(&self) -> bool {
        self.fast && !self.no_fast
    }
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SketchBenchArgs {
    #[command(flatten)]
    pub source: Source,
    /// Seed of the synthetic stream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,40")]
    pub m: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub alpha0: f64,
    #[command(flatten)]
    pub fast: FastFlag,
    /// Timed repeats per sketch; the median is reported.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct OnlineBenchArgs {
    #[command(flatten)]
    pub source: Source,
    /// Held-out LIBSVM file; without it the data is split by `--train-fraction`.
    #[arg(long, conflicts_with = "synthetic")]
    pub test_dataset: Option<PathBuf>,
    #[arg(long, default_value = "rfd_son")]
    pub algorithm: String,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub m: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub alpha0: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    /// `eta_t = eta0 / t`.
    #[arg(long, default_value_t = 1.0)]
    pub eta0: f64,
    /// Constraint radius.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[command(flatten)]
    pub fast: FastFlag,
    /// Largest dimension accepted for full_on.
    #[arg(long, default_value_t = 2000)]
    pub full_on_cap: usize,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct RegretCheckArgs {
    #[arg(long = "t", default_value_t = 2000)]
    pub t: usize,
    #[arg(long, default_value_t = 30)]
    pub d: usize,
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,1,10")]
    pub alpha0: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eta0: f64,
    #[command(flatten)]
    pub fast: FastFlag,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct CounterexampleArgs {
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    #[arg(long, default_value_t = 30)]
    pub s: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Output directory; defaults to the one recorded in the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs one command and returns the manifest path it wrote.
pub fn run(command: Command) -> Result<PathBuf> {
    match command {
        Command::SketchBench(args) => commands::cmd_sketch_bench(args),
        Command::OnlineBench(args) => commands::cmd_online_bench(args),
        Command::RegretCheck(args) => commands::cmd_regret_check(args),
        Command::Counterexample(args) => commands::cmd_counterexample(args),
        Command::Replay(args) => commands::cmd_replay(args),
    }
}
