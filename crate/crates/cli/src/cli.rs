//! Flag definitions for the `splitdoor` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "splitdoor",
    version,
    about = "Split-door criterion: causal effect estimation from time-series panels",
    after_help = "Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic panel with known ground truth
    Simulate(SimulateArgs),
    /// Run the independence screen and write discovered instances
    Discover(AnalysisArgs),
    /// Full single-level run: discovery, estimation, error bounds, groups
    Estimate(AnalysisArgs),
    /// Re-threshold one screen across several significance levels
    Sweep(AnalysisArgs),
    /// Map the estimate's sensitivity to an injected hidden confound
    Sensitivity(SensitivityArgs),
    /// Everything: estimate plus alpha sweep and sensitivity surface
    Report(ReportArgs),
}

/// Flags shared by all analysis subcommands. Every option can also be set
/// in a `key = value` config file; explicit flags win.
#[derive(Debug, Clone, Args)]
pub struct AnalysisArgs {
    /// Flat key=value config file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV path
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Input format: events | panel
    #[arg(long)]
    pub format: Option<String>,
    /// Window length in days [default: 15]
    #[arg(long)]
    pub tau: Option<usize>,
    /// Significance level(s); comma-separated for sweeps [default: 0.95]
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    /// Null resamples per test [default: 1000]
    #[arg(long)]
    pub resamples: Option<usize>,
    /// Base seed; all randomness derives from it [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep pairs whose focal series peaks at or above this [default: 10]
    #[arg(long = "min-peak")]
    pub min_peak: Option<f64>,
    /// Dependent-fraction estimator: nettleton | storey [default: nettleton]
    #[arg(long = "pi-estimator")]
    pub pi_estimator: Option<String>,
    /// Histogram bins for the adaptive estimator [default: 20]
    #[arg(long)]
    pub bins: Option<usize>,
    /// Storey threshold lambda [default: 0.5]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Critical value for the variance term [default: 2.58]
    #[arg(long)]
    pub z: Option<f64>,
    /// Also report the traffic-weighted mean estimate
    #[arg(long = "traffic-weighted")]
    pub traffic_weighted: bool,
    /// Cap worker threads (results are identical at any setting)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SensitivityFlags {
    /// Fraction(s) of instances perturbed, comma-separated [default: 1.0]
    #[arg(long, value_delimiter = ',')]
    pub kappa: Option<Vec<f64>>,
    /// Grid of confound strengths on x [default: -1,-0.5,0,0.5,1]
    #[arg(long = "c1-grid", value_delimiter = ',', allow_hyphen_values = true)]
    pub c1_grid: Option<Vec<f64>>,
    /// Grid of confound strengths on y_r [default: -1,-0.5,0,0.5,1]
    #[arg(long = "c2-grid", value_delimiter = ',', allow_hyphen_values = true)]
    pub c2_grid: Option<Vec<f64>>,
    /// Inject into raw series (clipping at zero) instead of standardized copies
    #[arg(long)]
    pub raw: bool,
    /// Estimator re-run per grid cell: ols | ratio
    /// [default: ols standardized, ratio raw]
    #[arg(long = "surface-estimator")]
    pub surface_estimator: Option<String>,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[command(flatten)]
    pub sensitivity: SensitivityFlags,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[command(flatten)]
    pub sensitivity: SensitivityFlags,
    /// Skip the sensitivity surface
    #[arg(long = "no-sensitivity")]
    pub no_sensitivity: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output directory for panel.csv and ground_truth.csv
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub pairs: usize,
    #[arg(long, default_value_t = 90)]
    pub days: usize,
    /// True causal effect
    #[arg(long, default_value_t = 0.05)]
    pub rho: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    /// Demand effect on x (confounded pairs)
    #[arg(long, default_value_t = 0.8, allow_hyphen_values = true)]
    pub gamma1: f64,
    /// Demand effect on y_r (confounded pairs)
    #[arg(long, default_value_t = 0.8, allow_hyphen_values = true)]
    pub gamma2: f64,
    /// Demand effect on y_d (all pairs)
    #[arg(long, default_value_t = 0.8, allow_hyphen_values = true)]
    pub gamma3: f64,
    #[arg(long = "noise-sd-x", default_value_t = 1.0)]
    pub noise_sd_x: f64,
    #[arg(long = "noise-sd-yr", default_value_t = 0.5)]
    pub noise_sd_yr: f64,
    #[arg(long = "noise-sd-yd", default_value_t = 1.0)]
    pub noise_sd_yd: f64,
    #[arg(long = "u-y-sd", default_value_t = 1.0)]
    pub u_y_sd: f64,
    /// Mean demand level; positive values create naive-CTR overstatement
    #[arg(long = "u-y-mean", default_value_t = 0.0, allow_hyphen_values = true)]
    pub u_y_mean: f64,
    /// AR(1) coefficient for demand (0 = white noise)
    #[arg(long = "u-y-ar1", default_value_t = 0.0, allow_hyphen_values = true)]
    pub u_y_ar1: f64,
    /// Heavy-tailed (log-normal) demand
    #[arg(long = "u-y-lognormal")]
    pub u_y_lognormal: bool,
    #[arg(long = "base-x", default_value_t = 50.0)]
    pub base_x: f64,
    #[arg(long = "base-yr", default_value_t = 0.0)]
    pub base_yr: f64,
    #[arg(long = "base-yd", default_value_t = 20.0)]
    pub base_yd: f64,
    /// Share of pairs with the demand confound active
    #[arg(long = "confounded-fraction", default_value_t = 0.5)]
    pub confounded_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Group label stamped on every generated pair
    #[arg(long)]
    pub group: Option<String>,
    /// Offset for generated pair ids, for composing panels
    #[arg(long = "id-offset", default_value_t = 0)]
    pub id_offset: usize,
}
