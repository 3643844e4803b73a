use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use roughvar::isometry::IntegrandPower;
use roughvar::{SourceMode, Thresholds};

#[derive(Debug, Parser, Serialize)]
#[command(name = "roughvar", version, about = "Pathwise p-th variation and scaled quadratic variation experiments")]
pub struct Cli {
    /// Print the main report as JSON on stdout instead of a summary.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Generate a path and write it as CSV or JSON.
    Gen(GenArgs),
    /// p-th variation profiles along dyadic levels.
    Pvar(PvarArgs),
    /// Pathwise scaled quadratic variation profiles.
    Sqv(SqvArgs),
    /// Classical scaled quadratic variation |Δt|^γ |Δx|².
    Classical(ClassicalArgs),
    /// Critical index search by bisection on q.
    Roughness(RoughnessArgs),
    /// Compare ⟨f∘x⟩ with ∫|f'(x)|^k d⟨x⟩ across levels.
    Isometry(IsometryArgs),
    /// Compare [f∘x]^(p) with Σ|f'(x)|^p Δ[x]^(p) across levels.
    Chainrule(ChainruleArgs),
    /// Compare ⟨x + A⟩ with ⟨x⟩ for a smooth perturbation A.
    Invariance(InvarianceArgs),
    /// Build the oscillating Schauder path and report its level values.
    Counterexample(CounterexampleArgs),
    /// Summarise the reports and manifests found in a directory.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KindArg {
    Fbm,
    Takagi,
    Counterexample,
    Smooth,
    CustomSchauder,
}

/// Input path: a file, or a generator description.
#[derive(Debug, Clone, Args, Serialize)]
pub struct PathArgs {
    /// Path file (`.csv` with `t,value` header, or `.json`).
    #[arg(long = "in", value_name = "FILE", conflicts_with = "kind")]
    pub input: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,

    /// Hurst index for fbm / takagi.
    #[arg(long = "H", value_name = "H", allow_negative_numbers = true)]
    pub hurst: Option<f64>,

    /// Grid level L (2^L + 1 samples).
    #[arg(long)]
    pub level: Option<u32>,

    /// Seed for fbm, or for seeded Takagi signs (all +1 without a seed).
    #[arg(long)]
    pub seed: Option<u64>,

    /// Counterexample depth.
    #[arg(long)]
    pub nmax: Option<u32>,

    /// Smooth perturbation amplitude.
    #[arg(long, allow_negative_numbers = true)]
    pub amplitude: Option<f64>,

    /// Smooth sine frequency.
    #[arg(long)]
    pub freq: Option<f64>,

    /// Smooth polynomial coefficients c0,c1,... (replaces the sine).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub poly: Option<Vec<f64>>,

    /// Schauder coefficient JSON for custom_schauder.
    #[arg(long, value_name = "FILE")]
    pub coeffs: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub vanish_level: Option<f64>,
    #[arg(long)]
    pub diverge_level: Option<f64>,
    #[arg(long)]
    pub slope_tol: Option<f64>,
    #[arg(long)]
    pub osc_ratio: Option<f64>,
    /// Classification tail window (default: all levels).
    #[arg(long)]
    pub window: Option<usize>,
}

impl ThresholdArgs {
    pub fn apply(&self, base: Thresholds) -> Thresholds {
        Thresholds {
            vanish_level: self.vanish_level.unwrap_or(base.vanish_level),
            diverge_level: self.diverge_level.unwrap_or(base.diverge_level),
            slope_tol: self.slope_tol.unwrap_or(base.slope_tol),
            oscillation_ratio: self.osc_ratio.unwrap_or(base.oscillation_ratio),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SrcArg {
    Analytic,
    FinestLevel,
    SelfLevel,
}

impl From<SrcArg> for SourceMode {
    fn from(s: SrcArg) -> Self {
        match s {
            SrcArg::Analytic => SourceMode::Analytic,
            SrcArg::FinestLevel => SourceMode::FinestLevel,
            SrcArg::SelfLevel => SourceMode::SelfLevel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerArg {
    P,
    Two,
}

impl From<PowerArg> for IntegrandPower {
    fn from(p: PowerArg) -> Self {
        match p {
            PowerArg::P => IntegrandPower::P,
            PowerArg::Two => IntegrandPower::Two,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[command(flatten)]
    pub path: PathArgs,
    /// Output file; `.json` for JSON, anything else for CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PvarArgs {
    #[command(flatten)]
    pub path: PathArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub p: f64,
    /// Levels `a:b` (inclusive) or a single level.
    #[arg(long)]
    pub levels: String,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SqvArgs {
    #[command(flatten)]
    pub path: PathArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub p: f64,
    #[arg(long)]
    pub levels: String,
    #[arg(long, value_enum, default_value = "finest-level")]
    pub src: SrcArg,
    /// Slope C of an analytic linear p-th variation t ↦ C t (default: the
    /// finest-level terminal p-th variation).
    #[arg(long, allow_negative_numbers = true)]
    pub slope: Option<f64>,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassicalArgs {
    #[command(flatten)]
    pub path: PathArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: f64,
    #[arg(long)]
    pub levels: String,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RoughnessArgs {
    #[command(flatten)]
    pub path: PathArgs,
    /// Levels (default 6 to L-2).
    #[arg(long)]
    pub levels: Option<String>,
    /// Search range `p_min,p_max`.
    #[arg(long, value_delimiter = ',', default_values_t = [1.2, 4.0], allow_negative_numbers = true)]
    pub range: Vec<f64>,
    #[arg(long, default_value_t = 12)]
    pub iters: u32,
    #[arg(long, value_enum, default_value = "finest-level")]
    pub src: SrcArg,
    /// Extra q values to classify with the default thresholds (per-q CSV for
    /// plotting).
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<f64>>,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct IsometryArgs {
    #[command(flatten)]
    pub path: PathArgs,
    /// Catalog map: identity, affine:a,b, square_plus_one, sin, exp_clamped[:c].
    #[arg(long)]
    pub map: Option<String>,
    /// Tabulated map CSV with columns u,f,f1,f2 (cubic interpolation).
    #[arg(long, value_name = "FILE", conflicts_with = "map")]
    pub map_table: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub p: f64,
    #[arg(long)]
    pub levels: String,
    #[arg(long, value_enum, default_value = "finest-level")]
    pub src: SrcArg,
    /// Power of |f'| in the integrand.
    #[arg(long, value_enum, default_value = "p")]
    pub power: PowerArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ChainruleArgs {
    #[command(flatten)]
    pub path: PathArgs,
    #[arg(long)]
    pub map: Option<String>,
    #[arg(long, value_name = "FILE", conflicts_with = "map")]
    pub map_table: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub p: f64,
    #[arg(long)]
    pub levels: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct InvarianceArgs {
    #[command(flatten)]
    pub path: PathArgs,
    /// Perturbation `sine:amplitude,freq`, `poly:c0,c1,...` or a path file.
    #[arg(long)]
    pub perturb: String,
    #[arg(long, allow_negative_numbers = true)]
    pub p: f64,
    #[arg(long)]
    pub levels: String,
    #[arg(long, value_enum, default_value = "finest-level")]
    pub src: SrcArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CounterexampleArgs {
    #[arg(long)]
    pub nmax: u32,
    /// Grid level (default S_nmax).
    #[arg(long)]
    pub level: Option<u32>,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Directory of earlier command outputs.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Summary file (default `<in>/summary.json`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}
