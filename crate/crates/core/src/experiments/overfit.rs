use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::probit::report_rows;
use super::{mean, partition_results, Scenario, StudyConfig, StudyResult, StudySummary};
use crate::data::{simulate_latent_probit, EvalSample};
use crate::error::{Result, XperError};
use crate::exact::{xper_exact, ExactOptions, XperReport};
use crate::metrics::{FittedMetric, MetricSpec};
use crate::rng::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverfitSummary {
    pub replications: usize,
    pub failed: usize,
    pub feature_names: Vec<String>,
    pub mean_metric_train: f64,
    pub mean_metric_test: f64,
    /// `mean_metric_train − mean_metric_test`.
    pub metric_gap: f64,
    pub mean_phi0_train: f64,
    pub mean_phi0_test: f64,
    pub mean_phi_train: Vec<f64>,
    pub mean_phi_test: Vec<f64>,
    pub mean_share_train: Vec<f64>,
    pub mean_share_test: Vec<f64>,
    /// `|mean_share_train − mean_share_test|` per feature.
    pub share_drift: Vec<f64>,
    pub max_share_drift: f64,
    /// Per feature, the fraction of replications whose test share strictly
    /// exceeds the training share.
    pub share_increase_rate: Vec<f64>,
}

struct Pair {
    train: XperReport<f64>,
    test: XperReport<f64>,
}

fn partitions(config: &StudyConfig, seed: u64) -> Result<(EvalSample<f64>, EvalSample<f64>)> {
    let names = config.feature_names();
    match (&config.shift_cov_diag, config.scenario) {
        (Some(shift), Scenario::OverfitShift) => {
            let train =
                simulate_latent_probit(&config.beta, &config.cov_diag, config.train_size, derive_seed(seed, 1))?;
            let test = simulate_latent_probit(&config.beta, shift, config.test_size, derive_seed(seed, 2))?;
            Ok((train.with_feature_names(names.clone())?, test.with_feature_names(names)?))
        }
        _ => {
            let all: EvalSample<f64> =
                simulate_latent_probit(&config.beta, &config.cov_diag, config.train_size + config.test_size, seed)?
                    .with_feature_names(names)?;
            Ok((
                all.subset(&(0..config.train_size).collect::<Vec<_>>())?,
                all.subset(&(config.train_size..all.n()).collect::<Vec<_>>())?,
            ))
        }
    }
}

fn replicate(config: &StudyConfig, replication: usize) -> Result<Pair> {
    let seed = derive_seed(config.seed, replication as u64);
    let (train, test) = partitions(config, seed)?;
    let model = config.model.fit(&train, seed)?;
    let options = ExactOptions {
        individual: false,
        ..Default::default()
    };
    let decompose = |sample: &EvalSample<f64>| -> Result<XperReport<f64>> {
        let metric = FittedMetric::fit_with_model(MetricSpec::new(config.metric), sample, &model)?;
        xper_exact(sample, &model, &metric, &options)
    };
    Ok(Pair {
        train: decompose(&train)?,
        test: decompose(&test)?,
    })
}

/// Decomposes the metric on both partitions of every replication.
pub fn run_overfit_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let results: Vec<Result<Pair>> = (0..config.replications)
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
    for (r, pair) in &ok {
        report_rows(&mut rows, *r, "train", &pair.train);
        report_rows(&mut rows, *r, "test", &pair.test);
    }
    let q = config.q();
    let pairs: Vec<&Pair> = ok.iter().map(|(_, p)| p).collect();
    let share_mean = |pick: fn(&Pair) -> &XperReport<f64>| -> Vec<f64> {
        (0..q)
            .map(|j| mean(pairs.iter().filter_map(|p| pick(p).shares[j])))
            .collect()
    };
    let mean_share_train = share_mean(|p| &p.train);
    let mean_share_test = share_mean(|p| &p.test);
    let share_drift: Vec<f64> = mean_share_train
        .iter()
        .zip(&mean_share_test)
        .map(|(a, b)| (a - b).abs())
        .collect();
    let share_increase_rate = (0..q)
        .map(|j| {
            let rising = pairs
                .iter()
                .filter(|p| matches!((p.train.shares[j], p.test.shares[j]), (Some(a), Some(b)) if b > a))
                .count();
            rising as f64 / pairs.len() as f64
        })
        .collect();
    let mean_metric_train = mean(pairs.iter().map(|p| p.train.pm_raw));
    let mean_metric_test = mean(pairs.iter().map(|p| p.test.pm_raw));
    let summary = OverfitSummary {
        replications: ok.len(),
        failed: failures.len(),
        feature_names: config.feature_names(),
        mean_metric_train,
        mean_metric_test,
        metric_gap: mean_metric_train - mean_metric_test,
        mean_phi0_train: mean(pairs.iter().map(|p| p.train.phi0)),
        mean_phi0_test: mean(pairs.iter().map(|p| p.test.phi0)),
        mean_phi_train: (0..q).map(|j| mean(pairs.iter().map(|p| p.train.phi[j]))).collect(),
        mean_phi_test: (0..q).map(|j| mean(pairs.iter().map(|p| p.test.phi[j]))).collect(),
        max_share_drift: share_drift.iter().copied().fold(0.0, f64::max),
        share_drift,
        mean_share_train,
        mean_share_test,
        share_increase_rate,
    };
    Ok(StudyResult {
        config: config.clone(),
        rows,
        failures,
        summary: StudySummary::Overfit(summary),
    })
}
