#![allow(dead_code)]

use rand::Rng;
use xper::data::{simulate_latent_probit, simulate_linear};
use xper::models::{fit_cart, fit_logit, fit_ols, fit_probit, CartConfig, GlmOptions};
use xper::rng::{derive_seed, seeded};
use xper::{Adapter, FittedMetric, MetricId, MetricSpec, Sample};

/// The ten performance metrics, in a fixed order.
pub const METRICS: [MetricId; 10] = [
    MetricId::Mae,
    MetricId::Mse,
    MetricId::R2,
    MetricId::Accuracy,
    MetricId::BalancedAccuracy,
    MetricId::Brier,
    MetricId::Precision,
    MetricId::Sensitivity,
    MetricId::Specificity,
    MetricId::Auc,
];

pub struct Triple {
    pub sample: Sample,
    pub model: Adapter,
    pub metric: FittedMetric<f64>,
    pub model_name: &'static str,
}

fn draw(seed: u64, metric: MetricId, n: usize, q: usize) -> xper::Result<Triple> {
    let mut rng = seeded(seed);
    let cov: Vec<f64> = (0..q).map(|_| rng.random_range(0.5..2.0)).collect();
    let slopes: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
    let intercept = rng.random_range(-0.5..0.5);
    let (sample, model, model_name): (Sample, Adapter, &'static str) =
        if MetricId::REGRESSION.contains(&metric) {
            let train: Sample = simulate_linear(intercept, &slopes, &cov, 0.8, 200, derive_seed(seed, 1))?;
            let test = simulate_linear(intercept, &slopes, &cov, 0.8, n, derive_seed(seed, 2))?;
            (test, fit_ols(&train, true)?.into(), "ols")
        } else {
            let beta: Vec<f64> = std::iter::once(intercept).chain(slopes).collect();
            let train: Sample = simulate_latent_probit(&beta, &cov, 200, derive_seed(seed, 1))?;
            let test = simulate_latent_probit(&beta, &cov, n, derive_seed(seed, 2))?;
            match rng.random_range(0..3) {
                0 => (test, fit_probit(&train, &GlmOptions::default())?.into(), "probit"),
                1 => (test, fit_logit(&train, &GlmOptions::default())?.into(), "logit"),
                _ => {
                    let config = CartConfig {
                        max_depth: rng.random_range(1..=4),
                        seed,
                        ..Default::default()
                    };
                    (test, fit_cart(&train, &config)?.into(), "cart")
                }
            }
        };
    let metric = FittedMetric::fit_with_model(MetricSpec::new(metric), &sample, &model)?;
    Ok(Triple {
        sample,
        model,
        metric,
        model_name,
    })
}

/// A random valid triple: draws whose model or metric is undefined (a
/// single-class sample, no predicted positives, separation) are redrawn.
pub fn random_triple(seed: u64, metric: MetricId, n: std::ops::RangeInclusive<usize>, q: std::ops::RangeInclusive<usize>) -> Triple {
    let mut rng = seeded(derive_seed(seed, 0xACE));
    for attempt in 0..1000u64 {
        let n = rng.random_range(n.clone());
        let q = rng.random_range(q.clone());
        if let Ok(t) = draw(derive_seed(seed, attempt + 16), metric, n, q) {
            return t;
        }
    }
    panic!("no valid draw for {metric} after 1000 attempts");
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}
