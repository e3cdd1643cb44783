//! Performance metrics written as means of per-instance contributions.
//!
//! Every metric is oriented so that larger is better: MAE, MSE and Brier
//! contributions are negated. Sample-level quantities a contribution
//! depends on (class rates, target variance, the AUC score pool) are fitted
//! once on a reference sample and kept in a [`Nuisance`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{EvalSample, Task};
use crate::error::{Result, XperError};
use crate::models::{predict_sample, Model, Prediction, DEFAULT_THRESHOLD};
use crate::scalar::{compensated_mean, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    Mae,
    Mse,
    R2,
    Accuracy,
    BalancedAccuracy,
    Brier,
    Precision,
    Sensitivity,
    Specificity,
    Auc,
    /// The model output itself; decomposing it gives SHAP values.
    Prediction,
}

impl MetricId {
    pub const ALL: [MetricId; 11] = [
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
        MetricId::Prediction,
    ];

    pub const REGRESSION: [MetricId; 3] = [MetricId::Mae, MetricId::Mse, MetricId::R2];

    pub const CLASSIFICATION: [MetricId; 7] = [
        MetricId::Accuracy,
        MetricId::BalancedAccuracy,
        MetricId::Brier,
        MetricId::Precision,
        MetricId::Sensitivity,
        MetricId::Specificity,
        MetricId::Auc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::Mae => "mae",
            MetricId::Mse => "mse",
            MetricId::R2 => "r2",
            MetricId::Accuracy => "accuracy",
            MetricId::BalancedAccuracy => "balanced_accuracy",
            MetricId::Brier => "brier",
            MetricId::Precision => "precision",
            MetricId::Sensitivity => "sensitivity",
            MetricId::Specificity => "specificity",
            MetricId::Auc => "auc",
            MetricId::Prediction => "prediction",
        }
    }

    /// Raw value is a loss, so contributions are negated.
    pub fn orientation_flip(self) -> bool {
        matches!(self, MetricId::Mae | MetricId::Mse | MetricId::Brier)
    }

    pub fn needs_probability(self) -> bool {
        matches!(self, MetricId::Auc | MetricId::Brier)
    }

    pub fn needs_label(self) -> bool {
        matches!(
            self,
            MetricId::Accuracy
                | MetricId::BalancedAccuracy
                | MetricId::Precision
                | MetricId::Sensitivity
                | MetricId::Specificity
        )
    }

    pub fn needs_both_classes(self) -> bool {
        matches!(
            self,
            MetricId::Auc | MetricId::BalancedAccuracy | MetricId::Sensitivity | MetricId::Specificity
        )
    }

    pub fn needs_binary_target(self) -> bool {
        self.needs_label() || self.needs_probability()
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricId {
    type Err = XperError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        MetricId::ALL
            .into_iter()
            .find(|m| m.as_str() == s || (s == "ba" && *m == MetricId::BalancedAccuracy))
            .ok_or_else(|| XperError::Config(format!("unknown metric `{s}`")))
    }
}

/// Which scores an AUC contribution is ranked against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AucReference {
    /// The sample being evaluated. On a marginalised sample this is the set
    /// of hybrid rows sharing the same donor row, so a sample with no
    /// feature information scores exactly 0.5.
    #[default]
    Hybrid,
    /// The scores of the original reference sample, fixed once fitted.
    Frozen,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub id: MetricId,
    /// Hard labels are `1(probability > threshold)`.
    pub threshold: f64,
    #[serde(default)]
    pub auc_reference: AucReference,
}

impl MetricSpec {
    pub fn new(id: MetricId) -> Self {
        Self {
            id,
            threshold: DEFAULT_THRESHOLD,
            auc_reference: AucReference::default(),
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_auc_reference(mut self, reference: AucReference) -> Self {
        self.auc_reference = reference;
        self
    }
}

impl From<MetricId> for MetricSpec {
    fn from(id: MetricId) -> Self {
        MetricSpec::new(id)
    }
}

/// Reference scores split by class, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorePool<T> {
    pub negatives: Vec<T>,
    pub positives: Vec<T>,
}

impl<T: Scalar> ScorePool<T> {
    fn new(ys: &[T], scores: impl Iterator<Item = T>) -> Self {
        let mut negatives = Vec::new();
        let mut positives = Vec::new();
        for (&y, s) in ys.iter().zip(scores) {
            if y == T::one() {
                positives.push(s);
            } else {
                negatives.push(s);
            }
        }
        let cmp = |a: &T, b: &T| a.partial_cmp(b).expect("finite scores");
        negatives.sort_by(cmp);
        positives.sort_by(cmp);
        Self { negatives, positives }
    }

    fn n(&self) -> usize {
        self.negatives.len() + self.positives.len()
    }

    /// Twice the number of opposite-class rows `score` beats (ties count half).
    #[inline]
    fn doubled_wins(&self, y: T, score: T) -> usize {
        if y == T::one() {
            let below = self.negatives.partition_point(|&s| s < score);
            let at_or_below = self.negatives.partition_point(|&s| s <= score);
            below + at_or_below
        } else {
            let above = self.positives.len() - self.positives.partition_point(|&s| s <= score);
            let at_or_above = self.positives.len() - self.positives.partition_point(|&s| s < score);
            above + at_or_above
        }
    }

    /// `n * wins / (2 n1 n0)`, whose mean over the pool is the AUC.
    #[inline]
    fn contribution(&self, y: T, score: T) -> T {
        let n = self.n();
        let denom = 4 * self.positives.len() * self.negatives.len();
        T::from_count(n) * T::from_count(self.doubled_wins(y, score)) / T::from_count(denom)
    }
}

/// Frozen sample-level parameters of a metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nuisance<T> {
    Empty,
    /// Population variance of the target (R²).
    TargetVariance { value: T },
    /// Mean of y and of 1 − y (balanced accuracy).
    ClassRates { positive: T, negative: T },
    /// Mean predicted label (precision).
    PredictedPositiveRate { value: T },
    /// Mean of y (sensitivity).
    PositiveRate { value: T },
    /// Mean of 1 − y (specificity).
    NegativeRate { value: T },
    /// Reference scores and the product of class rates (AUC).
    ScorePool { pool: ScorePool<T>, class_rate_product: T },
}

/// A metric together with the nuisance fitted on its reference sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedMetric<T> {
    pub spec: MetricSpec,
    pub nuisance: Nuisance<T>,
}

fn check_predictions<T: Scalar>(id: MetricId, preds: &[Prediction<T>]) -> Result<()> {
    if (id.needs_probability() || id.needs_label()) && preds.iter().any(|p| p.probability.is_none()) {
        return Err(XperError::Contract(format!(
            "metric `{id}` needs predicted probabilities but the model returns scores only"
        )));
    }
    Ok(())
}

impl<T: Scalar> FittedMetric<T> {
    /// Fits the nuisance from a sample and the model's predictions on it.
    pub fn fit(spec: MetricSpec, sample: &EvalSample<T>, preds: &[Prediction<T>]) -> Result<Self> {
        Self::fit_raw(spec, sample.target(), sample.task(), preds)
    }

    pub fn fit_with_model<M: Model<T> + ?Sized>(
        spec: MetricSpec,
        sample: &EvalSample<T>,
        model: &M,
    ) -> Result<Self> {
        let preds = predict_sample(model, sample)?;
        Self::fit(spec, sample, &preds)
    }

    pub fn fit_raw(spec: MetricSpec, ys: &[T], task: Task, preds: &[Prediction<T>]) -> Result<Self> {
        let id = spec.id;
        if ys.len() != preds.len() {
            return Err(XperError::Contract(format!(
                "{} targets but {} predictions",
                ys.len(),
                preds.len()
            )));
        }
        if !(spec.threshold > 0.0 && spec.threshold < 1.0) {
            return Err(XperError::Config(format!(
                "label threshold {} outside (0, 1)",
                spec.threshold
            )));
        }
        if id.needs_binary_target() && task != Task::BinaryClassification {
            return Err(XperError::Domain(format!(
                "metric `{id}` needs a binary classification target"
            )));
        }
        check_predictions(id, preds)?;
        let n = T::from_count(ys.len());
        let positives = ys.iter().filter(|&&y| y == T::one()).count();
        let rate1 = T::from_count(positives) / n;
        let rate0 = T::one() - rate1;
        if id.needs_both_classes() && (positives == 0 || positives == ys.len()) {
            return Err(XperError::DegenerateMetric(format!(
                "metric `{id}` needs both classes in the sample"
            )));
        }
        let threshold = T::lit(spec.threshold);
        let nuisance = match id {
            MetricId::Mae | MetricId::Mse | MetricId::Brier | MetricId::Accuracy | MetricId::Prediction => {
                Nuisance::Empty
            }
            MetricId::R2 => {
                let (_, var) = crate::scalar::mean_and_variance(ys);
                if !(var > T::zero()) {
                    return Err(XperError::DegenerateMetric(
                        "R² needs a target with positive variance".into(),
                    ));
                }
                Nuisance::TargetVariance { value: var }
            }
            MetricId::BalancedAccuracy => Nuisance::ClassRates {
                positive: rate1,
                negative: rate0,
            },
            MetricId::Sensitivity => Nuisance::PositiveRate { value: rate1 },
            MetricId::Specificity => Nuisance::NegativeRate { value: rate0 },
            MetricId::Precision => {
                let labels: Vec<T> = preds
                    .iter()
                    .map(|p| p.label(threshold).expect("checked"))
                    .collect();
                let value = compensated_mean(&labels);
                if value == T::zero() {
                    return Err(XperError::DegenerateMetric(
                        "precision is undefined when no instance is predicted positive".into(),
                    ));
                }
                Nuisance::PredictedPositiveRate { value }
            }
            MetricId::Auc => Nuisance::ScorePool {
                pool: ScorePool::new(ys, preds.iter().map(Prediction::value)),
                class_rate_product: rate1 * rate0,
            },
        };
        Ok(Self { spec, nuisance })
    }

    pub fn id(&self) -> MetricId {
        self.spec.id
    }

    /// `G(y; prediction)` against the frozen nuisance.
    pub fn contribution(&self, y: T, pred: &Prediction<T>) -> Result<T> {
        check_predictions(self.spec.id, std::slice::from_ref(pred))?;
        Ok(self.contribution_unchecked(y, pred, None))
    }

    #[inline]
    fn contribution_unchecked(&self, y: T, pred: &Prediction<T>, pool: Option<&ScorePool<T>>) -> T {
        let one = T::one();
        let threshold = T::lit(self.spec.threshold);
        let label = || pred.label(threshold).expect("checked");
        let prob = || pred.probability.expect("checked");
        match (&self.nuisance, self.spec.id) {
            (_, MetricId::Mae) => -(y - pred.value()).abs(),
            (_, MetricId::Mse) => -(y - pred.value()).powi(2),
            (Nuisance::TargetVariance { value }, MetricId::R2) => one - (y - pred.value()).powi(2) / *value,
            (_, MetricId::Accuracy) => {
                let f = label();
                y * f + (one - y) * (one - f)
            }
            (Nuisance::ClassRates { positive, negative }, MetricId::BalancedAccuracy) => {
                let f = label();
                T::lit(0.5) * (y * f / *positive + (one - y) * (one - f) / *negative)
            }
            (_, MetricId::Brier) => -(y - prob()).powi(2),
            (Nuisance::PredictedPositiveRate { value }, MetricId::Precision) => y * label() / *value,
            (Nuisance::PositiveRate { value }, MetricId::Sensitivity) => y * label() / *value,
            (Nuisance::NegativeRate { value }, MetricId::Specificity) => (one - y) * (one - label()) / *value,
            (Nuisance::ScorePool { pool: frozen, .. }, MetricId::Auc) => {
                pool.unwrap_or(frozen).contribution(y, pred.value())
            }
            (_, MetricId::Prediction) => pred.value(),
            (nuisance, id) => unreachable!("nuisance {nuisance:?} does not belong to {id}"),
        }
    }

    /// Sample metric (oriented) on `(ys, preds)`.
    pub fn sample_metric(&self, ys: &[T], preds: &[Prediction<T>]) -> Result<T> {
        let mut out = vec![T::zero(); ys.len()];
        self.contributions(ys, preds, &mut out)?;
        Ok(compensated_mean(&out))
    }

    /// Converts an oriented value back to the conventional scale.
    pub fn raw_value(&self, oriented: T) -> T {
        if self.spec.id.orientation_flip() {
            -oriented
        } else {
            oriented
        }
    }
}

/// Batch evaluation of per-instance contributions.
///
/// A batch is always one complete sample: the reference sample itself or a
/// marginalised copy of it with the same targets in the same order.
pub trait Contribution<T: Scalar>: Send + Sync {
    fn name(&self) -> String;

    fn contributions(&self, ys: &[T], preds: &[Prediction<T>], out: &mut [T]) -> Result<()>;

    fn raw_value(&self, oriented: T) -> T {
        oriented
    }
}

impl<T: Scalar> Contribution<T> for FittedMetric<T> {
    fn name(&self) -> String {
        self.spec.id.as_str().to_string()
    }

    fn contributions(&self, ys: &[T], preds: &[Prediction<T>], out: &mut [T]) -> Result<()> {
        if ys.len() != preds.len() || ys.len() != out.len() {
            return Err(XperError::Contract("batch length mismatch".into()));
        }
        check_predictions(self.spec.id, preds)?;
        let local;
        let pool = match (self.spec.id, self.spec.auc_reference) {
            (MetricId::Auc, AucReference::Hybrid) => {
                local = ScorePool::new(ys, preds.iter().map(Prediction::value));
                if local.positives.is_empty() || local.negatives.is_empty() {
                    return Err(XperError::DegenerateMetric("AUC needs both classes".into()));
                }
                Some(&local)
            }
            _ => None,
        };
        for ((o, &y), p) in out.iter_mut().zip(ys).zip(preds) {
            *o = self.contribution_unchecked(y, p, pool);
        }
        Ok(())
    }

    fn raw_value(&self, oriented: T) -> T {
        FittedMetric::raw_value(self, oriented)
    }
}

/// `Σ_k a_k G_k`: a linear combination of fitted metrics.
#[derive(Clone, Debug)]
pub struct CompositeMetric<T> {
    pub terms: Vec<(T, FittedMetric<T>)>,
}

impl<T: Scalar> Contribution<T> for CompositeMetric<T> {
    fn name(&self) -> String {
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(a, m)| format!("{a}*{}", m.spec.id))
            .collect();
        parts.join("+")
    }

    fn contributions(&self, ys: &[T], preds: &[Prediction<T>], out: &mut [T]) -> Result<()> {
        out.iter_mut().for_each(|o| *o = T::zero());
        let mut buf = vec![T::zero(); out.len()];
        for (a, metric) in &self.terms {
            metric.contributions(ys, preds, &mut buf)?;
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += *a * *b;
            }
        }
        Ok(())
    }
}

/// Rank-based AUC with half credit for ties.
pub fn auc<T: Scalar>(labels: &[T], scores: &[T]) -> Result<T> {
    if labels.len() != scores.len() {
        return Err(XperError::Contract("labels and scores differ in length".into()));
    }
    let pool = ScorePool::new(labels, scores.iter().copied());
    let (n1, n0) = (pool.positives.len(), pool.negatives.len());
    if n1 == 0 || n0 == 0 {
        return Err(XperError::DegenerateMetric("AUC needs both classes".into()));
    }
    let doubled: usize = pool.positives.iter().map(|&p| pool.doubled_wins(T::one(), p)).sum();
    Ok(T::from_count(doubled) / T::from_count(2 * n1 * n0))
}

/// Fits `spec` on the sample and returns its oriented sample value.
pub fn sample_metric<T: Scalar, M: Model<T> + ?Sized>(
    spec: MetricSpec,
    sample: &EvalSample<T>,
    model: &M,
) -> Result<T> {
    let preds = predict_sample(model, sample)?;
    let metric = FittedMetric::fit(spec, sample, &preds)?;
    metric.sample_metric(sample.target(), &preds)
}

/// Raw values of every metric defined for the sample's task; `None` where undefined.
pub fn metric_suite<T: Scalar>(
    sample: &EvalSample<T>,
    preds: &[Prediction<T>],
    threshold: f64,
) -> Vec<(MetricId, Option<T>)> {
    let ids: &[MetricId] = match sample.task() {
        Task::Regression => &MetricId::REGRESSION,
        Task::BinaryClassification => &MetricId::CLASSIFICATION,
    };
    ids.iter()
        .map(|&id| {
            let value = FittedMetric::fit(MetricSpec::new(id).with_threshold(threshold), sample, preds)
                .and_then(|m| m.sample_metric(sample.target(), preds).map(|v| m.raw_value(v)))
                .ok();
            (id, value)
        })
        .collect()
}
