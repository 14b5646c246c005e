use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use losscurv::experiments::Linspace;
use serde::Serialize;

/// Curvature of loss landscapes seen as graph hypersurfaces.
#[derive(Debug, Parser, Serialize)]
#[command(name = "losscurv", version, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct GlobalArgs {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for CSV and JSON artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for the parallel loops (outputs do not depend on it).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    /// Which artifacts to write.
    #[arg(long, global = true, value_enum, default_value_t = Format::Both)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Scalar curvature and Hessian summaries at a point.
    Curvature(PointArgs),
    /// Christoffel symbols at a point.
    Christoffel(PointArgs),
    /// Riemann tensor, its symmetry residuals and the Ricci trace.
    Riemann(PointArgs),
    /// Value, Hessian trace and curvature of the damped saddle on a grid.
    SaddleGrid(SaddleGridArgs),
    /// Geodesic ball volumes and the curvature fitted to their deficit.
    BallVolume(BallVolumeArgs),
    /// Squared loss change under random perturbations against its bound.
    Perturb(PerturbArgs),
    /// Ornstein–Uhlenbeck escape from a quadratic minimum.
    Escape(EscapeArgs),
    /// Curvature of averaged versus per-batch Hessians.
    Minibatch(MinibatchArgs),
    /// Train a small regression network on sine data and save it.
    Train(TrainArgs),
    /// Hutchinson estimates of tr H, tr H² and the critical-point curvature.
    Estimate(EstimateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    /// ½ (x − c)ᵀ A (x − c), from --diag or --matrix.
    Quadratic,
    /// ½ |x|² in --dim dimensions.
    Paraboloid,
    /// e^{−cu} sin u sin v.
    Saddle,
    /// Random quadratic-plus-sines field seeded by --seed.
    Trig,
    /// Training loss of a saved network (--model).
    Model,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FieldArgs {
    #[arg(long, value_enum, default_value_t = FieldKind::Quadratic)]
    pub field: FieldKind,
    /// Diagonal of a quadratic's matrix, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub diag: Option<Vec<f64>>,
    /// Full symmetric matrix: rows separated by ';', entries by ','.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "diag")]
    pub matrix: Option<String>,
    /// Centre (minimiser) of a quadratic.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub center: Option<Vec<f64>>,
    /// Dimension of the paraboloid, trig field, or default identity quadratic.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Damping of the saddle field.
    #[arg(long, default_value_t = 0.1)]
    pub c: f64,
    /// Number of sine terms in the trig field.
    #[arg(long, default_value_t = 3)]
    pub terms: usize,
    /// Saved network from `train`.
    #[arg(long, required_if_eq("field", "model"))]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PointArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    /// Evaluation point; defaults to the field's natural centre.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub at: Option<Vec<f64>>,
}

#[derive(Debug, Args, Serialize)]
pub struct SaddleGridArgs {
    #[arg(long, default_value_t = 0.1)]
    pub c: f64,
    /// u axis as start:stop:count.
    #[arg(long, default_value = "0:6:121", allow_hyphen_values = true)]
    pub u: Linspace,
    /// v axis as start:stop:count.
    #[arg(long, default_value = "0:6.283:121", allow_hyphen_values = true)]
    pub v: Linspace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitArg {
    Quadratic,
    QuadraticQuartic,
}

#[derive(Debug, Args, Serialize)]
pub struct BallVolumeArgs {
    #[command(flatten)]
    pub point: PointArgs,
    /// Radii as start:stop:count.
    #[arg(long, default_value = "0.05:0.3:6")]
    pub r: Linspace,
    /// Angular grid size (q = 2) or Monte Carlo directions (q ≥ 3).
    #[arg(long)]
    pub directions: Option<usize>,
    /// RK4 steps per geodesic (even).
    #[arg(long, default_value_t = 512)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = FitArg::QuadraticQuartic)]
    pub fit: FitArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    UnitSphere,
    Gaussian,
}

#[derive(Debug, Args, Serialize)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub point: PointArgs,
    /// Perturbation radius (unit-sphere) or per-coordinate noise σ (gaussian).
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    pub directions: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::UnitSphere)]
    pub mode: ModeArg,
}

#[derive(Debug, Args, Serialize)]
pub struct EscapeArgs {
    /// Diagonal of H, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub diag: Vec<f64>,
    /// Full symmetric H: rows separated by ';'. Overrides --diag.
    #[arg(long, allow_hyphen_values = true)]
    pub matrix: Option<String>,
    #[arg(long, default_value_t = 0.005)]
    pub t: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub dt: f64,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchSource {
    /// The diagonal pair diag(2,0), diag(0,2).
    Counterexample,
    /// Network Hessians on phase batches of sine data.
    Sine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationArg {
    Tanh,
    Relu,
    Identity,
}

#[derive(Debug, Args, Serialize)]
pub struct MinibatchArgs {
    #[arg(long, value_enum, default_value_t = BatchSource::Counterexample)]
    pub source: BatchSource,
    #[command(flatten)]
    pub net: NetArgs,
    /// Number of batches.
    #[arg(long, default_value_t = 7)]
    pub k: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct NetArgs {
    /// Layer widths, input to output.
    #[arg(long, value_delimiter = ',', default_value = "1,16,8,1")]
    pub widths: Vec<usize>,
    #[arg(long, value_enum, default_value_t = ActivationArg::Tanh)]
    pub activation: ActivationArg,
    /// Number of sine samples.
    #[arg(long, default_value_t = 70)]
    pub n: usize,
    /// Standard deviation of the target noise.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 3000)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    /// Minibatch size; defaults to the full dataset.
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub point: PointArgs,
    #[arg(long, default_value_t = 1000)]
    pub probes: usize,
}
