use serde::Serialize;
use serde_json::{json, Value};
use xper::data::{simulate_latent_probit, simulate_linear};
use xper::exact::{xper_exact, ExactOptions};
use xper::models::{fit_ols, fit_probit, predict_sample, GlmOptions};
use xper::oracles::{
    accuracy_explained_total, closed_form_individual_r2, closed_form_mse_xper, closed_form_r2_xper, shap_values,
    single_feature_mse_individual, LinearDgpMoments,
};
use xper::rng::derive_seed;
use xper::{FittedMetric, MetricId, MetricSpec, Prediction, Sample};

use super::RunContext;
use crate::args::{OracleArgs, OracleKind};
use crate::error::CliError;

#[derive(Serialize)]
pub struct Row {
    pub quantity: String,
    pub closed_form: f64,
    pub estimator: f64,
    pub abs_diff: f64,
}

fn row(quantity: impl Into<String>, closed_form: f64, estimator: f64) -> Row {
    Row {
        quantity: quantity.into(),
        closed_form,
        estimator,
        abs_diff: (closed_form - estimator).abs(),
    }
}

const LINEAR_BETA: [f64; 4] = [1.0, -0.6, 0.4, 0.0];
const LINEAR_COV: [f64; 4] = [1.0, 1.5, 0.8, 1.2];

fn linear_sample(n: usize, seed: u64) -> Result<Sample, CliError> {
    Ok(simulate_linear(0.3, &LINEAR_BETA, &LINEAR_COV, 1.0, n, seed)?)
}

fn global() -> ExactOptions {
    ExactOptions {
        individual: false,
        ..Default::default()
    }
}

fn linear_rows(kind: OracleKind, n: usize, seed: u64) -> Result<Vec<Row>, CliError> {
    let sample = linear_sample(n, seed)?;
    let model = fit_ols(&sample, true)?;
    let moments = LinearDgpMoments::from_model(&sample, &model)?;
    let mut rows = Vec::new();
    if kind == OracleKind::R2 {
        let metric = FittedMetric::fit_with_model(MetricSpec::new(MetricId::R2), &sample, &model)?;
        let report = xper_exact(&sample, &model, &metric, &ExactOptions::default())?;
        let (phi0, phi) = closed_form_r2_xper(&moments)?;
        rows.push(row("phi0", phi0, report.phi0));
        for (j, (c, e)) in phi.iter().zip(&report.phi).enumerate() {
            rows.push(row(format!("phi_x{}", j + 1), *c, *e));
        }
        let ind = report.individual.as_ref().expect("individual values requested");
        let mut worst = vec![0.0f64; sample.q()];
        for (i, est) in ind.phi.iter().enumerate() {
            let oracle = closed_form_individual_r2(&moments, sample.row(i), sample.target()[i])?;
            for (w, (a, b)) in worst.iter_mut().zip(oracle.iter().zip(est)) {
                *w = w.max((a - b).abs());
            }
        }
        for (j, w) in worst.iter().enumerate() {
            rows.push(Row {
                quantity: format!("max_instance_diff_x{}", j + 1),
                closed_form: 0.0,
                estimator: *w,
                abs_diff: *w,
            });
        }
    } else {
        let metric = FittedMetric::fit_with_model(MetricSpec::new(MetricId::Mse), &sample, &model)?;
        let report = xper_exact(&sample, &model, &metric, &global())?;
        let (phi0, phi, pm) = closed_form_mse_xper(&moments)?;
        rows.push(row("pm", pm, report.pm));
        rows.push(row("phi0", phi0, report.phi0));
        for (j, (c, e)) in phi.iter().zip(&report.phi).enumerate() {
            rows.push(row(format!("phi_x{}", j + 1), *c, *e));
        }
    }
    Ok(rows)
}

fn shap_rows(n: usize, seed: u64) -> Result<Vec<Row>, CliError> {
    let all: Sample = simulate_latent_probit(&[0.05, 0.5, 0.5, 0.0], &[1.2, 1.0, 1.0], n + n / 2, seed)?;
    let train = all.subset(&(0..n / 2).collect::<Vec<_>>())?;
    let test = all.subset(&(n / 2..n + n / 2).collect::<Vec<_>>())?;
    let model = fit_probit(&train, &GlmOptions::default())?;
    let metric = FittedMetric::fit_with_model(MetricSpec::new(MetricId::Prediction), &test, &model)?;
    let report = xper_exact(&test, &model, &metric, &ExactOptions::default())?;
    let shap = shap_values(&test, &model)?;
    let ind = report.individual.as_ref().expect("individual values requested");
    let mut rows = vec![row("phi0_mean", shap.base, report.phi0)];
    for j in 0..test.q() {
        let mut worst = 0.0f64;
        let mut mean = 0.0;
        for (a, b) in shap.values.iter().zip(&ind.phi) {
            worst = worst.max((a[j] - b[j]).abs());
            mean += a[j] / test.n() as f64;
        }
        rows.push(row(format!("phi_x{}", j + 1), mean, report.phi[j]));
        rows.push(Row {
            quantity: format!("max_instance_diff_x{}", j + 1),
            closed_form: 0.0,
            estimator: worst,
            abs_diff: worst,
        });
    }
    Ok(rows)
}

fn accuracy_rows(n: usize, seed: u64) -> Result<Vec<Row>, CliError> {
    let all: Sample = simulate_latent_probit(&[0.05, 0.5, 0.5, 0.0], &[1.2, 1.0, 1.0], 700 + n, seed)?;
    let train = all.subset(&(0..700).collect::<Vec<_>>())?;
    let test = all.subset(&(700..700 + n).collect::<Vec<_>>())?;
    let model = fit_probit(&train, &GlmOptions::default())?;
    let spec = MetricSpec::new(MetricId::Accuracy);
    let metric = FittedMetric::fit_with_model(spec, &test, &model)?;
    let report = xper_exact(&test, &model, &metric, &global())?;
    let labels: Vec<f64> = predict_sample(&model, &test)?
        .iter()
        .map(|p| p.label(spec.threshold).unwrap_or(0.0))
        .collect();
    let total: f64 = report.phi.iter().sum();
    Ok(vec![row("sum_phi", accuracy_explained_total(test.target(), &labels), total)])
}

fn single_mse_rows(n: usize, seed: u64) -> Result<Vec<Row>, CliError> {
    let sample: Sample = simulate_linear(0.0, &[1.3], &[1.0], 0.7, n, seed)?;
    let model = fit_ols(&sample, true)?;
    let metric = FittedMetric::fit_with_model(MetricSpec::new(MetricId::Mse), &sample, &model)?;
    let report = xper_exact(&sample, &model, &metric, &ExactOptions::default())?;
    let preds: Vec<f64> = predict_sample(&model, &sample)?.iter().map(Prediction::value).collect();
    let oracle = single_feature_mse_individual(sample.target(), &preds)?;
    let ind = report.individual.as_ref().expect("individual values requested");
    let (mut worst, mut mean_oracle, mut mean_est) = (0.0f64, 0.0, 0.0);
    for (o, e) in oracle.iter().zip(&ind.phi) {
        worst = worst.max((o - e[0]).abs());
        mean_oracle += o / sample.n() as f64;
        mean_est += e[0] / sample.n() as f64;
    }
    Ok(vec![
        row("mean_phi_x1", mean_oracle, mean_est),
        Row {
            quantity: "max_instance_diff_x1".into(),
            closed_form: 0.0,
            estimator: worst,
            abs_diff: worst,
        },
    ])
}

pub fn run(args: &OracleArgs, ctx: &mut RunContext) -> Result<Value, CliError> {
    if args.n < 10 {
        return Err(CliError::Usage("--n must be at least 10".into()));
    }
    ctx.seeds.push(args.seed);
    let seed = derive_seed(args.seed, 0);
    let rows = match args.kind {
        OracleKind::R2 | OracleKind::Mse => linear_rows(args.kind, args.n, seed)?,
        OracleKind::Shap => shap_rows(args.n, seed)?,
        OracleKind::Accuracy => accuracy_rows(args.n, seed)?,
        OracleKind::SingleMse => single_mse_rows(args.n, seed)?,
    };
    let worst = rows.iter().map(|r| r.abs_diff).fold(0.0, f64::max);
    Ok(json!({ "kind": args.kind, "n": args.n, "rows": rows, "max_abs_diff": worst }))
}

/// Plain-text rendering of an oracle result.
pub fn render_table(result: &Value) -> String {
    let mut out = format!("{:<24} {:>24} {:>24} {:>12}\n", "quantity", "closed_form", "estimator", "abs_diff");
    for r in result["rows"].as_array().into_iter().flatten() {
        out.push_str(&format!(
            "{:<24} {:>24.16e} {:>24.16e} {:>12.3e}\n",
            r["quantity"].as_str().unwrap_or(""),
            r["closed_form"].as_f64().unwrap_or(f64::NAN),
            r["estimator"].as_f64().unwrap_or(f64::NAN),
            r["abs_diff"].as_f64().unwrap_or(f64::NAN),
        ));
    }
    out
}
