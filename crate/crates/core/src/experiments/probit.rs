use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean, partition_results, std_dev, StudyConfig, StudyResult, StudySummary, TidyRow};
use crate::data::{simulate_latent_probit, EvalSample};
use crate::error::{Result, XperError};
use crate::exact::{xper_exact, ExactOptions, XperReport};
use crate::metrics::{FittedMetric, MetricSpec};
use crate::rng::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbitSummary {
    pub replications: usize,
    pub failed: usize,
    pub feature_names: Vec<String>,
    /// Mean of the metric on its conventional scale.
    pub mean_metric: f64,
    pub sd_metric: f64,
    pub mean_phi0: f64,
    pub sd_phi0: f64,
    pub mean_phi: Vec<f64>,
    pub sd_phi: Vec<f64>,
    /// Mean over replications of `phi_j / (pm − phi0)`, skipping undefined shares.
    pub mean_share: Vec<f64>,
}

/// Simulates, fits on the first `train_size` rows and decomposes on the rest.
pub(crate) fn replicate(config: &StudyConfig, replication: usize) -> Result<XperReport<f64>> {
    let seed = derive_seed(config.seed, replication as u64);
    let names = config.feature_names();
    let all: EvalSample<f64> =
        simulate_latent_probit(&config.beta, &config.cov_diag, config.train_size + config.test_size, seed)?
            .with_feature_names(names)?;
    let train = all.subset(&(0..config.train_size).collect::<Vec<_>>())?;
    let test = all.subset(&(config.train_size..all.n()).collect::<Vec<_>>())?;
    let model = config.model.fit(&train, seed)?;
    let metric = FittedMetric::fit_with_model(MetricSpec::new(config.metric), &test, &model)?;
    xper_exact(
        &test,
        &model,
        &metric,
        &ExactOptions {
            individual: false,
            ..Default::default()
        },
    )
}

pub(crate) fn report_rows(rows: &mut Vec<TidyRow>, replication: usize, partition: &str, report: &XperReport<f64>) {
    rows.push(TidyRow::new(replication, partition, &report.metric, "", report.pm_raw));
    rows.push(TidyRow::new(replication, partition, "phi0", "", report.phi0));
    for (j, name) in report.feature_names.iter().enumerate() {
        rows.push(TidyRow::new(replication, partition, "phi", name, report.phi[j]));
        if let Some(share) = report.shares[j] {
            rows.push(TidyRow::new(replication, partition, "share", name, share));
        }
    }
}

/// Monte Carlo distribution of the metric and its decomposition.
pub fn run_probit_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let results: Vec<Result<XperReport<f64>>> = (0..config.replications)
        .into_par_iter()
        .map(|r| replicate(config, r))
        .collect();
    let (ok, failures) = partition_results(results);
    if ok.is_empty() {
        return Err(XperError::Config(format!(
            "all {} replications failed; first error: {}",
            config.replications, failures[0].error
        )));
    }
    let mut rows = Vec::new();
    for (r, report) in &ok {
        report_rows(&mut rows, *r, "test", report);
    }
    let q = config.q();
    let reports: Vec<&XperReport<f64>> = ok.iter().map(|(_, r)| r).collect();
    let metric: Vec<f64> = reports.iter().map(|r| r.pm_raw).collect();
    let phi0: Vec<f64> = reports.iter().map(|r| r.phi0).collect();
    let phi: Vec<Vec<f64>> = (0..q).map(|j| reports.iter().map(|r| r.phi[j]).collect()).collect();
    let summary = ProbitSummary {
        replications: ok.len(),
        failed: failures.len(),
        feature_names: config.feature_names(),
        mean_metric: mean(metric.iter().copied()),
        sd_metric: std_dev(&metric),
        mean_phi0: mean(phi0.iter().copied()),
        sd_phi0: std_dev(&phi0),
        mean_phi: phi.iter().map(|c| mean(c.iter().copied())).collect(),
        sd_phi: phi.iter().map(|c| std_dev(c)).collect(),
        mean_share: (0..q).map(|j| mean(reports.iter().filter_map(|r| r.shares[j]))).collect(),
    };
    Ok(StudyResult {
        config: config.clone(),
        rows,
        failures,
        summary: StudySummary::Probit(summary),
    })
}
