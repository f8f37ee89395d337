use std::path::PathBuf;

use asc_core::exact::DEFAULT_BUDGET;
use asc_core::{CostFamily, Engine, NsigmaMode};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "asc", version, about = "Approximation set coding for clustering validation")]
pub struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "ASC_OUT_DIR", default_value = ".")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Draw a train/test sample pair from a Gaussian mixture.
    Gen(GenArgs),
    /// Approximation capacity of one cost function on a sample pair.
    Capacity(CapacityArgs),
    /// Rank candidate cost functions and cluster counts by capacity.
    Select(SelectArgs),
    /// Simulate the coding protocol and compare error rates with the bound.
    Simulate(SimulateArgs),
    /// Rerun the command recorded in a manifest.json.
    #[serde(skip)]
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct MixtureArgs {
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long = "k-true", default_value_t = 2)]
    pub k_true: usize,
    /// Dimension.
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Distance between component centers.
    #[arg(long, default_value_t = 6.0)]
    pub sep: f64,
    /// Measurement noise standard deviation.
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    /// Spread of latent positions around their center.
    #[arg(long, default_value_t = 1.0)]
    pub spread: f64,
    /// Component weights, comma separated; uniform by default.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Fixed component counts instead of random labels.
    #[arg(long)]
    pub stratified: bool,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GenArgs {
    #[command(flatten)]
    pub mixture: MixtureArgs,
    /// Draw the test sample from fresh latent positions.
    #[arg(long)]
    pub independent: bool,
    /// Write squared-distance matrices instead of vectors.
    #[arg(long)]
    pub dissim: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EngineArgs {
    #[arg(long, default_value = "auto")]
    pub engine: Engine,
    /// Codeword count model: multinomial or asymptotic.
    #[arg(long, default_value = "multinomial")]
    pub nsigma: NsigmaMode,
    /// Explicit beta grid starting at 0, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Positive points of a derived grid.
    #[arg(long = "grid-points", default_value_t = 25)]
    pub grid_points: usize,
    /// Omit the zero-temperature point from a derived exact grid.
    #[arg(long = "no-ground-state")]
    pub no_ground_state: bool,
    /// Largest k^n the exact engine may enumerate.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
    #[arg(long = "sweeps-burnin", default_value_t = 200)]
    pub sweeps_burnin: usize,
    #[arg(long = "sweeps-measure", default_value_t = 400)]
    pub sweeps_measure: usize,
    #[arg(long, default_value_t = 8)]
    pub chains: usize,
    #[arg(long, default_value_t = 50)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Matching {
    /// Nearest training vector for each test object.
    Nearest,
    /// Object i of the test sample is object i of the training sample.
    Identity,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct DataArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_enum, default_value = "nearest")]
    pub correspondence: Matching,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CapacityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "kmeans")]
    pub cost: CostFamily,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Cost families, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "kmeans")]
    pub cost: Vec<CostFamily>,
    /// Cluster counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub k: Vec<usize>,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub mixture: MixtureArgs,
    #[arg(long, default_value = "kmeans")]
    pub cost: CostFamily,
    /// Model cluster count.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Rates in bits per object, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.25")]
    pub rate: Vec<f64>,
    /// Approximation precisions, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,4,8")]
    pub gamma: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long = "max-codewords", default_value_t = asc_core::comms::DEFAULT_MAX_CODEWORDS)]
    pub max_codewords: usize,
    #[arg(long, default_value = "multinomial")]
    pub nsigma: NsigmaMode,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
