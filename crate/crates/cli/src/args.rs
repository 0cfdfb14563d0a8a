//! Command-line arguments and their config-file counterparts.
//!
//! Every subcommand option can also be given in the `[<subcommand>]` section
//! of the TOML file passed with `--config`, under the same name with
//! underscores. Command-line values win.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "covbreak", version, about = "Change-point tests for the covariance of K high-dimensional time series")]
pub struct Cli {
    /// Master seed; drawn from the OS and printed when omitted.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// TOML file with defaults for every option.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for the Monte Carlo parts (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an AR(1) panel and write one CSV per sample.
    Simulate(SimulateArgs),
    /// Run a change-point test on CSV samples.
    Test(TestArgs),
    /// Simulate critical values of the limit distributions.
    Critval(CritvalArgs),
    /// Run a size/power study.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Table,
    Json,
    Csv,
}

/// Top-level keys of the config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    #[serde(default)]
    pub simulate: SimulateArgs,
    #[serde(default)]
    pub test: TestArgs,
    #[serde(default)]
    pub critval: CritvalArgs,
    #[serde(default)]
    pub experiment: ExperimentArgs,
}

/// Fills every unset field of `$a` from `$b`.
macro_rules! merge_fields {
    ($a:ident, $b:ident; $($field:ident),* $(,)?) => {
        $( if $a.$field.is_none() { $a.$field = $b.$field; } )*
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// Output directory for sample_<j>.csv and panel.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dimension of the observation vectors.
    #[arg(long)]
    pub d: Option<usize>,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Sample sizes of a preset case (I, II, III, IV) instead of --n.
    #[arg(long)]
    pub case: Option<String>,
    /// Pre-change AR coefficients per coordinate (default 0.1 + 0.5ν/d).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub rho0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub rho1: Option<Vec<f64>>,
    /// Pre-change innovation standard deviation per sample (default 1).
    #[arg(long, value_delimiter = ',')]
    pub sigma0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub sigma1: Option<Vec<f64>>,
    /// Change index per sample.
    #[arg(long, value_delimiter = ',')]
    pub tau: Option<Vec<usize>>,
    /// Physical change time, mapped to indices through the sampling rates.
    #[arg(long)]
    pub change_time: Option<usize>,
    /// Observation horizon for --change-time.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Also write a Dirichlet projection vector to w.txt.
    #[arg(long)]
    pub projection: Option<bool>,
}

impl SimulateArgs {
    pub fn merge(mut self, file: SimulateArgs) -> Self {
        merge_fields!(self, file; out, d, n, case, rho0, rho1, sigma0, sigma1, tau, change_time, horizon, burn_in, projection);
        self
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestArgs {
    /// Sample CSV files, one per sample.
    #[arg(value_name = "FILE")]
    #[serde(default)]
    pub files: Vec<PathBuf>,
    /// q, v, q-breve or v-breve.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub level: Option<f64>,
    /// File with the v projection vector.
    #[arg(long)]
    pub v: Option<PathBuf>,
    /// File with the w projection vector.
    #[arg(long)]
    pub w: Option<PathBuf>,
    /// Estimate the long-run variances on the first L rows of each sample.
    #[arg(long)]
    pub learning: Option<usize>,
    /// Fixed kernel bandwidth instead of the Andrews rule.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Population targets v'Σw for q and v, one per sample or one for all.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub target: Option<Vec<f64>>,
    #[arg(long)]
    pub n_grid: Option<usize>,
    #[arg(long)]
    pub n_rep: Option<usize>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl TestArgs {
    pub fn merge(mut self, file: TestArgs) -> Self {
        if self.files.is_empty() {
            self.files = file.files;
        }
        merge_fields!(self, file; kind, level, v, w, learning, bandwidth, target, n_grid, n_rep, format, out);
        self
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CritvalArgs {
    #[arg(long)]
    pub kind: Option<String>,
    /// Number of samples.
    #[arg(long = "K")]
    #[serde(rename = "K")]
    pub k: Option<usize>,
    /// One or more levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub level: Option<Vec<f64>>,
    /// Long-run standard deviations α_j (pooled kinds).
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    /// Sample fractions κ_j = N_j/N (pooled kinds).
    #[arg(long, value_delimiter = ',')]
    pub kappa: Option<Vec<f64>>,
    #[arg(long)]
    pub n_grid: Option<usize>,
    #[arg(long)]
    pub n_rep: Option<usize>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Also write the CSV table here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CritvalArgs {
    pub fn merge(mut self, file: CritvalArgs) -> Self {
        merge_fields!(self, file; kind, k, level, alpha, kappa, n_grid, n_rep, format, out);
        self
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentArgs {
    /// Starting point; the remaining options override it.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub cases: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// none, sigma-change or coefficient-change.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub change_times: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<String>>,
    /// LRV modes: in-sample or learning:<L>, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub lrv: Option<Vec<String>>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub sigma0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub sigma1: Option<Vec<f64>>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub n_grid: Option<usize>,
    #[arg(long)]
    pub n_rep: Option<usize>,
    /// per-replication or per-cell.
    #[arg(long)]
    pub projection_draw: Option<String>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write results here; CSV when the name ends in .csv, JSON otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ExperimentArgs {
    pub fn merge(mut self, file: ExperimentArgs) -> Self {
        merge_fields!(
            self, file; preset, replications, cases, dims, scenario, change_times, kinds, lrv, level,
            sigma0, sigma1, burn_in, n_grid, n_rep, projection_draw, format, out
        );
        self
    }
}
