//! Reproducible studies built on the estimators: Monte Carlo replications of
//! a probit design, train/test overfitting diagnostics, permutation
//! importance, k-medoids clustering and cluster-wise boosting.
//!
//! Every study is a pure function of its configuration and seed.
//! Replications run in parallel on derived seeds and are collected in
//! replication order, so output tables are bit-identical across runs.

mod boost;
mod importance;
mod kmedoids;
mod overfit;
mod probit;
mod recipe;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, XperError};
use crate::metrics::MetricId;

pub use boost::{
    boost_pipeline, simulate_two_regime, AssignmentRule, BoostColumn, BoostConfig, BoostReport, GroupSummary,
    TwoRegimeDgp,
};
pub use importance::{permutation_importance, PermutationImportance};
pub use kmedoids::{fit_kmedoids, ClusterModel, ClusterSpace};
pub use overfit::{run_overfit_study, OverfitSummary};
pub use probit::{run_probit_study, ProbitSummary};
pub use recipe::ModelRecipe;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    ProbitBaseline,
    OverfitDepth,
    OverfitShift,
    BoostSynthetic,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::ProbitBaseline,
        Scenario::OverfitDepth,
        Scenario::OverfitShift,
        Scenario::BoostSynthetic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::ProbitBaseline => "probit_baseline",
            Scenario::OverfitDepth => "overfit_depth",
            Scenario::OverfitShift => "overfit_shift",
            Scenario::BoostSynthetic => "boost_synthetic",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = XperError;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| XperError::Config(format!("unknown scenario `{s}`")))
    }
}

/// Everything a study needs; `preset` fills in the standard designs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenario: Scenario,
    pub replications: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Intercept followed by one slope per feature.
    pub beta: Vec<f64>,
    pub cov_diag: Vec<f64>,
    /// Test-partition feature variances, when they differ from training.
    pub shift_cov_diag: Option<Vec<f64>>,
    pub model: ModelRecipe,
    pub metric: MetricId,
    pub seed: u64,
}

impl StudyConfig {
    pub fn preset(scenario: Scenario) -> Self {
        let cart = |depths: std::ops::RangeInclusive<usize>, min_depth: Option<usize>| ModelRecipe::Cart {
            depths: depths.collect(),
            min_depth,
            min_leaf: 1,
            folds: 5,
        };
        match scenario {
            Scenario::ProbitBaseline => Self {
                scenario,
                replications: 200,
                train_size: 700,
                test_size: 300,
                beta: vec![0.05, 0.5, 0.5, 0.0],
                cov_diag: vec![1.2, 1.0, 1.0],
                shift_cov_diag: None,
                model: ModelRecipe::Probit,
                metric: MetricId::Auc,
                seed: 20_240_101,
            },
            Scenario::OverfitDepth => Self {
                scenario,
                replications: 100,
                train_size: 700,
                test_size: 300,
                beta: vec![0.05, 0.5, 0.5, 0.5],
                cov_diag: vec![1.3, 1.2, 1.1],
                shift_cov_diag: None,
                model: cart(6..=10, Some(6)),
                metric: MetricId::Auc,
                seed: 20_240_102,
            },
            Scenario::OverfitShift => Self {
                scenario,
                replications: 100,
                train_size: 700,
                test_size: 300,
                beta: vec![0.05, 0.5, 0.5, 0.5],
                cov_diag: vec![1.3, 1.2, 1.1],
                shift_cov_diag: Some(vec![3.0, 1.2, 1.1]),
                model: cart(1..=5, None),
                metric: MetricId::Auc,
                seed: 20_240_103,
            },
            Scenario::BoostSynthetic => Self {
                scenario,
                replications: 1,
                train_size: 1000,
                test_size: 500,
                beta: TwoRegimeDgp::default().beta(),
                cov_diag: vec![1.0, 1.0, 1.0],
                shift_cov_diag: None,
                model: ModelRecipe::Cart {
                    depths: vec![4],
                    min_depth: None,
                    min_leaf: 5,
                    folds: 0,
                },
                metric: MetricId::Auc,
                seed: 20_240_104,
            },
        }
    }

    pub fn q(&self) -> usize {
        self.cov_diag.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(XperError::Config("replications must be at least 1".into()));
        }
        if self.train_size < 2 || self.test_size < 2 {
            return Err(XperError::Config("train and test sizes must be at least 2".into()));
        }
        if self.beta.len() != self.cov_diag.len() + 1 {
            return Err(XperError::Config(format!(
                "beta holds {} values; expected an intercept plus {} slopes",
                self.beta.len(),
                self.cov_diag.len()
            )));
        }
        if let Some(shift) = &self.shift_cov_diag {
            if shift.len() != self.cov_diag.len() {
                return Err(XperError::Config("shifted variances differ in length".into()));
            }
        }
        if self.scenario == Scenario::OverfitShift && self.shift_cov_diag.is_none() {
            return Err(XperError::Config("overfit_shift needs shifted test variances".into()));
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        (1..=self.q()).map(|j| format!("x{j}")).collect()
    }
}

/// One long-format record of a study table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TidyRow {
    pub replication: usize,
    pub partition: String,
    pub quantity: String,
    /// Empty for sample-level quantities.
    pub feature: String,
    pub value: f64,
}

impl TidyRow {
    pub(crate) fn new(replication: usize, partition: &str, quantity: &str, feature: &str, value: f64) -> Self {
        Self {
            replication,
            partition: partition.to_string(),
            quantity: quantity.to_string(),
            feature: feature.to_string(),
            value,
        }
    }
}

/// A replication that raised an error and was left out of the summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedReplication {
    pub replication: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum StudySummary {
    Probit(ProbitSummary),
    Overfit(OverfitSummary),
    Boost(BoostReport),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub rows: Vec<TidyRow>,
    pub failures: Vec<FailedReplication>,
    pub summary: StudySummary,
}

impl StudyResult {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_tidy_csv(&self.rows, path)
    }

    pub fn write_summary_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(&(&self.config, &self.summary, &self.failures))
            .map_err(|e| XperError::Io(std::io::Error::other(e)))?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(json.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

pub fn write_tidy_csv(rows: &[TidyRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the study named by `config.scenario`.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    match config.scenario {
        Scenario::ProbitBaseline => run_probit_study(config),
        Scenario::OverfitDepth | Scenario::OverfitShift => run_overfit_study(config),
        Scenario::BoostSynthetic => boost::run_boost_study(config),
    }
}

/// Collects per-replication results, splitting out failures.
pub(crate) fn partition_results<R>(results: Vec<Result<R>>) -> (Vec<(usize, R)>, Vec<FailedReplication>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (replication, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push((replication, v)),
            Err(e) => failed.push(FailedReplication {
                replication,
                error: XperError::Replication {
                    replication,
                    source: Box::new(e),
                }
                .to_string(),
            }),
        }
    }
    (ok, failed)
}

pub(crate) fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut s = crate::scalar::CompensatedSum::new();
    for v in values {
        s.add(v);
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        s.value() / n as f64
    }
}

pub(crate) fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values.iter().copied());
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}
