use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use spillover::basis::BasisScaling;

#[derive(Debug, Parser)]
#[command(name = "spillover", version, about = "Exposure effects under mobility-induced interference")]
pub struct Cli {
    /// Worker threads for parallel chains and replicates (all cores when unset).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Where to write the run manifest (default: manifest.json in the output
    /// directory, or the working directory when nothing is written).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    /// Increase log verbosity (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build home-time fractions and travel shares from a flow matrix.
    Mobility(MobilityArgs),
    /// Generate a synthetic panel with known truth.
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler on a panel.
    Fit(FitArgs),
    /// Posterior estimands from saved draws.
    Estimate(EstimateArgs),
    /// Closed-form bias diagnostics and plot tables.
    Bias(BiasArgs),
    /// Replicate study comparing estimators.
    Experiment(ExperimentArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Mobility(_) => "mobility",
            Command::Simulate(_) => "simulate",
            Command::Fit(_) => "fit",
            Command::Estimate(_) => "estimate",
            Command::Bias(_) => "bias",
            Command::Experiment(_) => "experiment",
        }
    }

    /// Directory that receives the run's outputs.
    pub fn output_dir(&self) -> Option<PathBuf> {
        let parent = |p: &Path| p.parent().map(Path::to_path_buf).filter(|d| !d.as_os_str().is_empty());
        match self {
            Command::Mobility(a) => Some(a.out.clone()),
            Command::Simulate(a) => Some(a.out.clone()),
            Command::Experiment(a) => Some(a.out.clone()),
            Command::Fit(a) => parent(&a.out),
            Command::Estimate(a) => a.out.as_deref().and_then(parent),
            Command::Bias(a) => a.command.out().and_then(parent),
        }
    }
}

#[derive(Debug, Args)]
pub struct MobilityArgs {
    /// Square flow matrix without header; entry (i, j) is time or trips from
    /// region i spent in region j.
    #[arg(long)]
    pub matrix: PathBuf,
    /// Optional exposures with header w1..wq, and optionally x1..xp and y.
    #[arg(long)]
    pub exposures: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON simulation settings; defaults are used for missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the number of regions.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScalingArg {
    UnitNorm,
    UnitVariance,
}

impl From<ScalingArg> for BasisScaling {
    fn from(s: ScalingArg) -> Self {
        match s {
            ScalingArg::UnitNorm => BasisScaling::UnitNorm,
            ScalingArg::UnitVariance => BasisScaling::UnitVariance,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Panel CSV with columns y, tau, w1..wq, g1..gq and optional x1..xp.
    #[arg(long)]
    pub data: PathBuf,
    /// Total sweeps per chain, burn-in included.
    #[arg(long, default_value_t = 2000)]
    pub draws: usize,
    #[arg(long, default_value_t = 500)]
    pub burnin: usize,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Horseshoe prior on the home/neighbourhood gap (default).
    #[arg(long, group = "model")]
    pub shrinkage: bool,
    /// Gaussian prior with a common variance on the gap.
    #[arg(long, group = "model")]
    pub non_shrinkage: bool,
    /// Home exposure only, ignoring mobility.
    #[arg(long, group = "model")]
    pub naive: bool,
    /// Polynomial degree per exposure.
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    #[arg(long, value_enum, default_value_t = ScalingArg::UnitVariance)]
    pub scaling: ScalingArg,
    /// Multiplies every home-time fraction before fitting.
    #[arg(long, default_value_t = 1.0)]
    pub tau_scale: f64,
    /// Omit the intercept from the covariate block.
    #[arg(long)]
    pub no_intercept: bool,
    /// Binary draws file.
    #[arg(long, default_value = "posterior.draws")]
    pub out: PathBuf,
    /// Also write the draws as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Draws file written by `fit`.
    #[arg(long)]
    pub posterior: PathBuf,
    /// Panel the posterior was fitted on.
    #[arg(long)]
    pub data: PathBuf,
    /// Seed of the Bayesian bootstrap.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Average over units with equal weights instead of Dirichlet weights.
    #[arg(long)]
    pub no_bootstrap: bool,
    /// JSON summary (printed to stdout when unset).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-draw values as CSV.
    #[arg(long)]
    pub draws_out: Option<PathBuf>,
    #[command(subcommand)]
    pub estimand: EstimandCommand,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimandCommand {
    /// Sample-average effect of shifting every exposure.
    Omega {
        /// Shift per exposure; a single value is applied to all.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        delta: Option<Vec<f64>>,
        /// Per-region shifts with header dw1..dwq, dg1..dgq.
        #[arg(long, conflicts_with = "delta")]
        shifts: Option<PathBuf>,
        /// Score against the fitted mean rather than the observed outcomes.
        #[arg(long)]
        fitted_mean: bool,
    },
    /// Mean potential outcome at (w, g).
    Mu {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        w: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        g: Vec<f64>,
    },
    /// Marginal home-exposure response at w.
    Phi {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        w: Vec<f64>,
    },
    /// Marginal neighbourhood-exposure response at g.
    Psi {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        g: Vec<f64>,
    },
    /// Effect of moving from (w, g) to (w + dw, g + dg), split into direct and
    /// spillover parts.
    Lambda {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        w: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        g: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        dw: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        dg: Vec<f64>,
    },
    /// Response curve along one coordinate, written as CSV.
    Curve {
        #[arg(long, value_enum, default_value_t = CurveArg::Phi)]
        kind: CurveArg,
        /// Point at which the other coordinates are held.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        base: Vec<f64>,
        /// Zero-based coordinate to vary.
        #[arg(long, default_value_t = 0)]
        coord: usize,
        /// Grid as lo:hi:points.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        #[arg(long)]
        csv: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveArg {
    Phi,
    Psi,
}

#[derive(Debug, Args)]
pub struct BiasArgs {
    #[command(subcommand)]
    pub command: BiasCommand,
}

/// Linear two-exposure setting shared by several diagnostics.
#[derive(Debug, Clone, Args, Serialize)]
pub struct LinearArgs {
    #[arg(long)]
    pub tau: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub rho: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub beta_w: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub beta_g: f64,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "diagnostic", rename_all = "kebab-case")]
pub enum BiasCommand {
    /// Attenuation factors when the home-time fraction is measured with error.
    Xi {
        /// Law of the true fraction, e.g. uniform:0.25:0.75 or beta:30:10.
        #[arg(long)]
        tau_dist: String,
        /// Law of the measurement error.
        #[arg(long, allow_hyphen_values = true)]
        eta_dist: String,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        beta_w: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        beta_g: f64,
    },
    /// Bias when the fraction is scaled by a constant c.
    Misspec {
        #[arg(long)]
        c: f64,
        #[arg(long, allow_hyphen_values = true)]
        rho: f64,
        #[arg(long)]
        tau_dist: String,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        beta_g: f64,
    },
    /// Slope of the outcome on home exposure alone.
    NaiveSlope(LinearArgs),
    /// Slope on the combined exposure with a scalar fraction.
    WeightedStar(LinearArgs),
    /// Bias when the true fraction is the used one plus mean-zero noise.
    Additive {
        #[arg(long)]
        tau_dist: String,
        #[arg(long, allow_hyphen_values = true)]
        eta_dist: String,
        #[arg(long, allow_hyphen_values = true)]
        rho: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        beta_w: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        beta_g: f64,
    },
    /// Monte-Carlo OLS check of a closed form, configured by JSON.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
    /// True and naive curves by correlation, as CSV.
    CurveTable {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-0.8,-0.4,0,0.4,0.8")]
        rhos: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, default_value_t = 0.3, allow_hyphen_values = true)]
        curvature: f64,
        #[arg(long, default_value_t = 100_000)]
        mc_draws: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Scalar-misspecification bias against correlation by fraction law, as CSV.
    MisspecTable {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        c: f64,
    },
    /// Attenuation factors and bias against error variance by law, as CSV.
    XiTable {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        max_eta2: f64,
        #[arg(long, default_value_t = 50)]
        points: usize,
    },
}

impl BiasCommand {
    pub fn out(&self) -> Option<&Path> {
        match self {
            BiasCommand::CurveTable { out, .. }
            | BiasCommand::MisspecTable { out, .. }
            | BiasCommand::XiTable { out, .. } => Some(out),
            _ => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// no-difference, small-difference, moderate-difference or all.
    #[arg(long, default_value = "all")]
    pub scenario: String,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Sweeps per fit, burn-in included.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
}
