use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "xper", version, about = "Decompose model performance metrics into feature contributions")]
pub struct Cli {
    /// Worker threads for coalition evaluation; 0 uses every core.
    #[arg(long, global = true, env = "XPER_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// Write the report to this file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

/// Every subcommand with its resolved flags. This is what a manifest stores.
#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Command {
    /// Decompose a metric on one evaluation sample.
    Decompose(DecomposeArgs),
    /// Run a Monte Carlo study and write its tidy table and summary.
    Simulate(SimulateArgs),
    /// Compare one model against cluster-specific models.
    Boost(BoostArgs),
    /// Compare estimators with closed-form results on simulated data.
    Oracle(OracleArgs),
    /// Write a simulated dataset as CSV.
    Generate(GenerateArgs),
    /// Rerun the command recorded in a report and check its digest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Decompose(_) => "decompose",
            Command::Simulate(_) => "simulate",
            Command::Boost(_) => "boost",
            Command::Oracle(_) => "oracle",
            Command::Generate(_) => "generate",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct DataArgs {
    /// Name of the target column.
    #[arg(long)]
    pub target: String,

    /// Columns to encode as categorical, by name.
    #[arg(long = "categorical", value_delimiter = ',')]
    #[serde(default)]
    pub categorical: Vec<String>,

    /// Force the task instead of inferring it from the target.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskArg {
    Regression,
    Binary,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Exact,
    Wls,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct DecomposeArgs {
    /// Evaluation sample (CSV with a header row).
    #[arg(long)]
    pub data: PathBuf,

    #[command(flatten)]
    pub columns: DataArgs,

    /// `builtin:<ols|probit|logit|cart[:...]>` or `exec:<program>`.
    #[arg(long)]
    pub model: String,

    /// Extra argument passed to an `exec:` adapter; repeatable.
    #[arg(long = "adapter-arg", allow_hyphen_values = true)]
    #[serde(default)]
    pub adapter_args: Vec<String>,

    /// Training sample for built-in models; defaults to the evaluation sample.
    #[arg(long)]
    pub train: Option<PathBuf>,

    /// Metric id, for example `auc`, `r2` or `brier`.
    #[arg(long)]
    pub metric: String,

    /// Probability threshold for label-based metrics.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,

    #[arg(long, value_enum, default_value_t = Method::Exact)]
    pub method: Method,

    /// Number of sampled coalitions for `--method wls`.
    #[arg(long)]
    pub k_samples: Option<usize>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Include the per-instance matrix.
    #[arg(long)]
    pub individual: bool,

    /// Solve the sampled system without the efficiency constraints.
    #[arg(long)]
    pub unconstrained: bool,

    /// Draw coalitions proportionally to their kernel weight.
    #[arg(long)]
    pub kernel_sampling: bool,

    /// Allow exact enumeration beyond the feature-count limit.
    #[arg(long)]
    pub allow_large_q: bool,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// probit_baseline, overfit_depth, overfit_shift or boost_synthetic.
    #[arg(long)]
    pub scenario: String,

    #[arg(long)]
    pub reps: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub train_size: Option<usize>,

    #[arg(long)]
    pub test_size: Option<usize>,

    /// Model recipe override, for example `cart:depths=1-5,folds=5`.
    #[arg(long)]
    pub model: Option<String>,

    /// Directory for `<scenario>.csv` and `<scenario>_summary.json`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceArg {
    Xper,
    Features,
    #[default]
    Both,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BoostArgs {
    #[arg(long)]
    pub train: PathBuf,

    #[arg(long)]
    pub test: PathBuf,

    #[command(flatten)]
    pub columns: DataArgs,

    /// Built-in recipe: `ols`, `probit`, `logit` or `cart[:...]`.
    #[arg(long, default_value = "cart:depth=4,min_leaf=5")]
    pub model: String,

    #[arg(long, default_value = "auc")]
    pub metric: String,

    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,

    #[arg(long, default_value_t = 2)]
    pub clusters: usize,

    #[arg(long, value_enum, default_value_t = SpaceArg::Both)]
    pub space: SpaceArg,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Assign test rows by feature-space centroids instead of their XPER values.
    #[arg(long)]
    pub deploy_safe: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// Global and individual R² against the linear closed forms.
    R2,
    /// MSE against the linear closed form.
    Mse,
    /// Prediction-metric XPER against interventional SHAP.
    Shap,
    /// Total accuracy contribution against twice the label covariance.
    Accuracy,
    /// Per-instance single-feature MSE against its closed form.
    SingleMse,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Table,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct OracleArgs {
    #[arg(long, value_enum)]
    pub kind: OracleKind,

    #[arg(long, default_value_t = 2000)]
    pub n: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerateKind {
    /// `y = b0 + x·b + noise`.
    Linear,
    /// Latent probit labels.
    Probit,
    /// Latent probit mixture whose regimes disagree on the first slope.
    TwoRegime,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: GenerateKind,

    #[arg(long)]
    pub n: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Intercept followed by one slope per feature.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(default)]
    pub beta: Vec<f64>,

    /// Feature variances; default 1 for every feature.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub cov: Vec<f64>,

    /// Noise standard deviation for `linear`.
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,

    /// Destination CSV; the target column is named `y`.
    #[arg(long)]
    pub csv: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// A report written by an earlier run.
    pub report: PathBuf,
}
