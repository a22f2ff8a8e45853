use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "restartsc",
    version,
    about = "Restarted spectral clustering with block-diagonal Nyström kernels"
)]
pub struct Cli {
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster one dataset and write partition, metrics, and history.
    Cluster(ClusterArgs),
    /// Run several configs five times each and tabulate mean metrics.
    Bench(BenchArgs),
    /// Check the approximation bounds on random instances with dense oracles.
    VerifyTheory(TheoryArgs),
    /// Write labeled Gaussian blobs as CSV (label in the last column).
    MakeBlobs(BlobArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Alg1,
    Alg2,
    Kmeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Random,
    Kmeans,
}

/// Flags that override fields of a TOML run config.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// CSV dataset path (replaces the config's dataset).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Zero-based label column for --data.
    #[arg(long, requires = "data")]
    pub label_column: Option<usize>,
    /// LIBSVM dataset path (replaces the config's dataset).
    #[arg(long, conflicts_with = "data")]
    pub libsvm: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub algorithm: Option<AlgorithmArg>,
    /// Number of clusters.
    #[arg(short = 'c', long = "clusters")]
    pub c: Option<usize>,
    #[arg(long, value_enum, conflicts_with = "init_file")]
    pub init: Option<InitArg>,
    /// Initial partition as `sample_index,cluster` CSV.
    #[arg(long)]
    pub init_file: Option<PathBuf>,
    /// Gaussian bandwidth, or `median`.
    #[arg(long)]
    pub tau: Option<String>,
    /// Landmarks per block: an integer, a fraction in (0, 1], or `auto`.
    #[arg(long)]
    pub landmarks: Option<String>,
    /// Target rank per block: an integer, a fraction in (0, 1], or `auto`.
    #[arg(long)]
    pub rank: Option<String>,
    #[arg(long)]
    pub itermax: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// TOML run config. Optional when --data or --libsvm is given.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// TOML run configs, one table row each (named by file stem).
    #[arg(required = true)]
    pub configs: Vec<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    /// CSV output path.
    #[arg(short, long, default_value = "bench.csv")]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    /// TOML suite config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub rank: Option<usize>,
    /// JSON report path.
    #[arg(short, long, default_value = "theory.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BlobArgs {
    #[arg(short = 'c', long = "clusters", default_value_t = 3)]
    pub c: usize,
    #[arg(long, default_value_t = 100)]
    pub per_cluster: usize,
    #[arg(short, long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 6.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long, default_value = "blobs.csv")]
    pub out: PathBuf,
}
