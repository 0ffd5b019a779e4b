use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(
    name = "geotrack",
    about = "Zeroth-order tracking on Hadamard manifolds",
    version
)]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal step size and oracle precision for the configured constants.
    Params,
    /// Tracking bound, contraction and complexity for the configured schedule.
    Bounds(BoundsArgs),
    /// Averaged Karcher tracking study; writes one CSV per arm.
    Run,
    /// Geometry and oracle verification suites.
    Verify(VerifyArgs),
    /// Render `e_mean` curves from run CSVs as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Starting error for the iteration count.
    #[arg(long)]
    pub e0: Option<f64>,
    /// Accuracy above the asymptotic bound.
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    /// Horizon for the regret bound (doubling schedule).
    #[arg(long)]
    pub horizon: Option<u64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Add the understated-smoothness oracle case, which is expected to fail.
    #[arg(long)]
    pub negative_control: bool,
    /// Monte-Carlo samples per oracle case.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Random triangles in the geometry suite.
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// CSV files written by `run`.
    #[arg(required = true)]
    pub csv: Vec<PathBuf>,
    /// Output file; defaults to `<out>/tracking_error.svg`.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldArg {
    Euclidean,
    Spd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleArg {
    Constant,
    Optimal,
    Doubling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftArg {
    ConstantSpeed,
    DecayingSpeed,
}

/// Flags that override the configuration file; flags win.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long = "L", global = true)]
    pub l: Option<f64>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    #[arg(long = "V", global = true)]
    pub v: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub kappa: Option<f64>,
    #[arg(long = "R", global = true)]
    pub r: Option<f64>,
    #[arg(long = "G", global = true)]
    pub g: Option<f64>,
    #[arg(long, global = true)]
    pub cbar: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub schedule: Option<ScheduleArg>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub manifold: Option<ManifoldArg>,
    #[arg(long, global = true)]
    pub m: Option<usize>,
    #[arg(long = "N", global = true)]
    pub n: Option<usize>,
    #[arg(long = "T", global = true)]
    pub t: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub drift: Option<DriftArg>,
    /// Fixed drift speed; when absent the speed is calibrated to `delta`.
    #[arg(long, global = true)]
    pub omega: Option<f64>,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
}
