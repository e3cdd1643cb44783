use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::kmedoids::{fit_kmedoids, nearest, ClusterModel, ClusterSpace};
use super::{ModelRecipe, StudyConfig, StudyResult, StudySummary, TidyRow};
use crate::data::{EvalSample, Task};
use crate::error::{Result, XperError};
use crate::exact::{xper_exact, ExactOptions, XperReport};
use crate::metrics::{metric_suite, FittedMetric, MetricId, MetricSpec};
use crate::models::{predict_sample, Model, ModelAdapter, Prediction};
use crate::rng::{derive_seed, seeded};
use crate::scalar::mean_and_variance;

/// Latent probit mixture of two regimes that disagree on the sign of the
/// first slope. The regime is drawn independently of the features and is
/// not observed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoRegimeDgp {
    pub intercept: f64,
    /// Slopes in the majority regime; the minority regime flips the first.
    pub slopes: Vec<f64>,
    pub minority_rate: f64,
}

impl Default for TwoRegimeDgp {
    fn default() -> Self {
        Self {
            intercept: 0.05,
            slopes: vec![1.5, 0.5, 0.5],
            minority_rate: 0.35,
        }
    }
}

impl TwoRegimeDgp {
    pub fn from_beta(beta: &[f64]) -> Result<Self> {
        if beta.len() < 2 {
            return Err(XperError::Config("the two-regime design needs at least one slope".into()));
        }
        Ok(Self {
            intercept: beta[0],
            slopes: beta[1..].to_vec(),
            ..Default::default()
        })
    }

    pub fn beta(&self) -> Vec<f64> {
        std::iter::once(self.intercept).chain(self.slopes.iter().copied()).collect()
    }
}

/// Draws `n` rows with standard normal features; returns the sample and
/// each row's regime (1 for the minority).
pub fn simulate_two_regime(dgp: &TwoRegimeDgp, n: usize, seed: u64) -> Result<(EvalSample<f64>, Vec<u8>)> {
    let q = dgp.slopes.len();
    let mut rng = seeded(seed);
    let mut features = Vec::with_capacity(n * q);
    let mut target = Vec::with_capacity(n);
    let mut regimes = Vec::with_capacity(n);
    for _ in 0..n {
        let minority = rng.random::<f64>() < dgp.minority_rate;
        let mut latent = dgp.intercept;
        for (j, &b) in dgp.slopes.iter().enumerate() {
            let x: f64 = StandardNormal.sample(&mut rng);
            latent += if j == 0 && minority { -b } else { b } * x;
            features.push(x);
        }
        let e: f64 = StandardNormal.sample(&mut rng);
        target.push(if latent + e > 0.0 { 1.0 } else { 0.0 });
        regimes.push(u8::from(minority));
    }
    let names = (1..=q).map(|j| format!("x{j}")).collect();
    Ok((
        EvalSample::new(features, target, Task::BinaryClassification)?.with_feature_names(names)?,
        regimes,
    ))
}

/// How test instances reach a group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentRule {
    /// Nearest medoid in the clustering space. In XPER space this uses the
    /// test instances' own XPER values, which depend on their labels.
    #[default]
    Evaluation,
    /// Nearest centroid of each group in standardized feature space; needs
    /// no labels.
    DeploySafe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub recipe: ModelRecipe,
    pub metric: MetricSpec,
    pub k: usize,
    pub spaces: Vec<ClusterSpace>,
    pub assignment: AssignmentRule,
    pub seed: u64,
    pub max_iter: usize,
}

impl BoostConfig {
    pub fn new(recipe: ModelRecipe, metric: MetricSpec, k: usize, seed: u64) -> Self {
        Self {
            recipe,
            metric,
            k,
            spaces: vec![ClusterSpace::Xper, ClusterSpace::Features],
            assignment: AssignmentRule::Evaluation,
            seed,
            max_iter: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub medoid: Vec<f64>,
    /// Decomposition of the group model on its test members, when defined.
    pub xper: Option<XperReport<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xper_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostColumn {
    /// `initial`, `xper` or `features`.
    pub label: String,
    pub metrics: Vec<(MetricId, Option<f64>)>,
    pub groups: Vec<GroupSummary>,
    /// Pooled test probabilities, one per test row.
    pub test_predictions: Vec<f64>,
}

impl BoostColumn {
    pub fn metric(&self, id: MetricId) -> Option<f64> {
        self.metrics.iter().find(|(m, _)| *m == id).and_then(|(_, v)| *v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostReport {
    pub k: usize,
    pub recipe: String,
    pub metric: MetricId,
    pub assignment: AssignmentRule,
    pub columns: Vec<BoostColumn>,
}

impl BoostReport {
    pub fn column(&self, label: &str) -> Option<&BoostColumn> {
        self.columns.iter().find(|c| c.label == label)
    }
}

/// Column means and population standard deviations (a zero spread maps to 1).
struct Standardizer {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl Standardizer {
    fn fit(sample: &EvalSample<f64>) -> Self {
        let (mean, sd) = (0..sample.q())
            .map(|j| {
                let (m, v) = mean_and_variance(&sample.column(j));
                (m, if v > 0.0 { v.sqrt() } else { 1.0 })
            })
            .unzip();
        Self { mean, sd }
    }

    fn apply(&self, sample: &EvalSample<f64>) -> Vec<Vec<f64>> {
        sample
            .rows()
            .map(|r| r.iter().enumerate().map(|(j, x)| (x - self.mean[j]) / self.sd[j]).collect())
            .collect()
    }
}

fn individual_matrix(sample: &EvalSample<f64>, model: &ModelAdapter<f64>, spec: MetricSpec) -> Result<Vec<Vec<f64>>> {
    let metric = FittedMetric::fit_with_model(spec, sample, model)?;
    let report = xper_exact(sample, model, &metric, &ExactOptions::default())?;
    Ok(report.individual.expect("individual values requested").phi)
}

fn column_metrics(test: &EvalSample<f64>, preds: &[Prediction<f64>], spec: MetricSpec) -> Vec<(MetricId, Option<f64>)> {
    metric_suite(test, preds, spec.threshold)
}

fn group_rows(assignment: &[usize], group: usize) -> Vec<usize> {
    assignment
        .iter()
        .enumerate()
        .filter(|(_, &a)| a == group)
        .map(|(i, _)| i)
        .collect()
}

fn clustered_column(
    label: &str,
    space: ClusterSpace,
    train: &EvalSample<f64>,
    test: &EvalSample<f64>,
    base: &ModelAdapter<f64>,
    standardizer: &Standardizer,
    config: &BoostConfig,
) -> Result<BoostColumn> {
    let train_points = match space {
        ClusterSpace::Xper => individual_matrix(train, base, config.metric)?,
        ClusterSpace::Features => standardizer.apply(train),
    };
    let clusters: ClusterModel =
        fit_kmedoids(&train_points, config.k, config.seed, config.max_iter)?.with_space(space);

    let train_std = standardizer.apply(train);
    let test_std = standardizer.apply(test);
    let test_assignment: Vec<usize> = match (space, config.assignment) {
        (ClusterSpace::Features, _) => test_std.iter().map(|p| clusters.assign(p)).collect(),
        (ClusterSpace::Xper, AssignmentRule::Evaluation) => individual_matrix(test, base, config.metric)?
            .iter()
            .map(|p| clusters.assign(p))
            .collect(),
        (ClusterSpace::Xper, AssignmentRule::DeploySafe) => {
            let q = train.q();
            let centroids: Vec<Vec<f64>> = (0..config.k)
                .map(|g| {
                    let rows = group_rows(&clusters.assignment, g);
                    (0..q)
                        .map(|j| rows.iter().map(|&i| train_std[i][j]).sum::<f64>() / rows.len().max(1) as f64)
                        .collect()
                })
                .collect();
            test_std.iter().map(|p| nearest(p, &centroids)).collect()
        }
    };

    let mut preds = vec![Prediction::score(0.0); test.n()];
    let mut groups = Vec::with_capacity(config.k);
    for g in 0..config.k {
        let rows = group_rows(&clusters.assignment, g);
        let group_train = train.subset(&rows).map_err(|e| XperError::GroupDegenerate {
            group: g,
            message: format!("{e}; try fewer clusters"),
        })?;
        if !group_train.has_both_classes() {
            return Err(XperError::GroupDegenerate {
                group: g,
                message: format!(
                    "its {} training rows hold a single class; try fewer clusters",
                    group_train.n()
                ),
            });
        }
        let model = config.recipe.fit(&group_train, config.seed).map_err(|e| XperError::GroupDegenerate {
            group: g,
            message: format!("model fit failed ({e}); try fewer clusters"),
        })?;
        let test_rows = group_rows(&test_assignment, g);
        let mut xper = None;
        let mut xper_error = None;
        if !test_rows.is_empty() {
            let mut batch = Vec::with_capacity(test_rows.len() * test.q());
            for &i in &test_rows {
                batch.extend_from_slice(test.row(i));
            }
            for (&i, p) in test_rows.iter().zip(model.predict(&batch)?) {
                preds[i] = p;
            }
            let decomposition = test.subset(&test_rows).and_then(|group_test| {
                let metric = FittedMetric::fit_with_model(config.metric, &group_test, &model)?;
                xper_exact(
                    &group_test,
                    &model,
                    &metric,
                    &ExactOptions {
                        individual: false,
                        ..Default::default()
                    },
                )
            });
            match decomposition {
                Ok(r) => xper = Some(r),
                Err(e) => xper_error = Some(e.to_string()),
            }
        }
        groups.push(GroupSummary {
            group: g,
            train_size: rows.len(),
            test_size: test_rows.len(),
            medoid: clusters.medoids[g].clone(),
            xper,
            xper_error,
        });
    }
    Ok(BoostColumn {
        label: label.to_string(),
        metrics: column_metrics(test, &preds, config.metric),
        groups,
        test_predictions: preds.iter().map(Prediction::value).collect(),
    })
}

/// One-fits-all model against one model per cluster, scored on the test set.
pub fn boost_pipeline(train: &EvalSample<f64>, test: &EvalSample<f64>, config: &BoostConfig) -> Result<BoostReport> {
    if train.q() != test.q() || train.feature_names() != test.feature_names() {
        return Err(XperError::Config("train and test columns differ".into()));
    }
    if train.task() != Task::BinaryClassification || test.task() != Task::BinaryClassification {
        return Err(XperError::Config("cluster boosting needs a classification target".into()));
    }
    if config.k == 0 {
        return Err(XperError::Range("at least one cluster is needed".into()));
    }
    let base = config.recipe.fit(train, config.seed)?;
    let base_preds = predict_sample(&base, test)?;
    let mut columns = vec![BoostColumn {
        label: "initial".into(),
        metrics: column_metrics(test, &base_preds, config.metric),
        groups: Vec::new(),
        test_predictions: base_preds.iter().map(Prediction::value).collect(),
    }];
    let standardizer = Standardizer::fit(train);
    for &space in &config.spaces {
        let label = match space {
            ClusterSpace::Xper => "xper",
            ClusterSpace::Features => "features",
        };
        columns.push(clustered_column(label, space, train, test, &base, &standardizer, config)?);
    }
    Ok(BoostReport {
        k: config.k,
        recipe: config.recipe.to_string(),
        metric: config.metric.id,
        assignment: config.assignment,
        columns,
    })
}

/// Synthetic two-regime boosting comparison with two clusters.
pub(crate) fn run_boost_study(config: &StudyConfig) -> Result<StudyResult> {
    let dgp = TwoRegimeDgp::from_beta(&config.beta)?;
    let (train, _) = simulate_two_regime(&dgp, config.train_size, derive_seed(config.seed, 1))?;
    let (test, _) = simulate_two_regime(&dgp, config.test_size, derive_seed(config.seed, 2))?;
    let boost = BoostConfig::new(config.model.clone(), MetricSpec::new(config.metric), 2, config.seed);
    let report = boost_pipeline(&train, &test, &boost)?;
    let mut rows = Vec::new();
    for column in &report.columns {
        for (id, value) in &column.metrics {
            if let Some(v) = value {
                rows.push(TidyRow::new(0, &column.label, id.as_str(), "", *v));
            }
        }
    }
    Ok(StudyResult {
        config: config.clone(),
        rows,
        failures: Vec::new(),
        summary: StudySummary::Boost(report),
    })
}
