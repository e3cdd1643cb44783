//! Prediction interface shared by built-in and external models.

mod external;
mod linear;
mod tree;

pub use external::{ExternalModel, PROTOCOL_VERSION};
pub use linear::{fit_logit, fit_ols, fit_probit, GlmOptions, LinearKind, LinearModel};
pub use tree::{cross_validate_depth, fit_cart, CartConfig, DecisionTree, TreeNode};

use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Result, XperError};
use crate::scalar::Scalar;

/// Default probability cut-off for hard labels.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// One model output. Classification models fill `probability`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction<T> {
    pub score: T,
    pub probability: Option<T>,
}

impl<T: Scalar> Prediction<T> {
    pub fn score(score: T) -> Self {
        Self {
            score,
            probability: None,
        }
    }

    pub fn probability(score: T, probability: T) -> Self {
        Self {
            score,
            probability: Some(probability),
        }
    }

    /// Probability when present, otherwise the raw score.
    #[inline]
    pub fn value(&self) -> T {
        self.probability.unwrap_or(self.score)
    }

    /// Hard label `1(p > threshold)`.
    #[inline]
    pub fn label(&self, threshold: T) -> Option<T> {
        self.probability
            .map(|p| if p > threshold { T::one() } else { T::zero() })
    }
}

pub trait Model<T: Scalar>: Send + Sync {
    fn task(&self) -> Task;

    fn n_features(&self) -> usize;

    /// Predicts a row-major batch of `rows.len() / n_features()` rows.
    fn predict(&self, rows: &[T]) -> Result<Vec<Prediction<T>>>;

    /// Whether `predict` may be called from several threads at once.
    fn supports_concurrent_predict(&self) -> bool {
        true
    }
}

pub(crate) fn check_width<T>(rows: &[T], q: usize) -> Result<usize> {
    if q == 0 || rows.len() % q != 0 {
        return Err(XperError::Contract(format!(
            "batch of {} values is not a whole number of {q}-wide rows",
            rows.len()
        )));
    }
    Ok(rows.len() / q)
}

/// Any supported model behind one type.
#[derive(Debug)]
pub enum ModelAdapter<T> {
    Linear(LinearModel<T>),
    Tree(DecisionTree<T>),
    External(ExternalModel),
}

impl<T: Scalar> Model<T> for ModelAdapter<T> {
    fn task(&self) -> Task {
        match self {
            ModelAdapter::Linear(m) => m.task(),
            ModelAdapter::Tree(m) => Model::<T>::task(m),
            ModelAdapter::External(m) => Model::<T>::task(m),
        }
    }

    fn n_features(&self) -> usize {
        match self {
            ModelAdapter::Linear(m) => m.n_features(),
            ModelAdapter::Tree(m) => Model::<T>::n_features(m),
            ModelAdapter::External(m) => Model::<T>::n_features(m),
        }
    }

    fn predict(&self, rows: &[T]) -> Result<Vec<Prediction<T>>> {
        match self {
            ModelAdapter::Linear(m) => m.predict(rows),
            ModelAdapter::Tree(m) => m.predict(rows),
            ModelAdapter::External(m) => m.predict(rows),
        }
    }

    fn supports_concurrent_predict(&self) -> bool {
        !matches!(self, ModelAdapter::External(_))
    }
}

impl<T> From<LinearModel<T>> for ModelAdapter<T> {
    fn from(m: LinearModel<T>) -> Self {
        ModelAdapter::Linear(m)
    }
}

impl<T> From<DecisionTree<T>> for ModelAdapter<T> {
    fn from(m: DecisionTree<T>) -> Self {
        ModelAdapter::Tree(m)
    }
}

impl<T> From<ExternalModel> for ModelAdapter<T> {
    fn from(m: ExternalModel) -> Self {
        ModelAdapter::External(m)
    }
}

impl<T: Scalar, M: Model<T> + ?Sized> Model<T> for &M {
    fn task(&self) -> Task {
        (**self).task()
    }
    fn n_features(&self) -> usize {
        (**self).n_features()
    }
    fn predict(&self, rows: &[T]) -> Result<Vec<Prediction<T>>> {
        (**self).predict(rows)
    }
    fn supports_concurrent_predict(&self) -> bool {
        (**self).supports_concurrent_predict()
    }
}

impl<T: Scalar, M: Model<T> + ?Sized> Model<T> for Box<M> {
    fn task(&self) -> Task {
        (**self).task()
    }
    fn n_features(&self) -> usize {
        (**self).n_features()
    }
    fn predict(&self, rows: &[T]) -> Result<Vec<Prediction<T>>> {
        (**self).predict(rows)
    }
    fn supports_concurrent_predict(&self) -> bool {
        (**self).supports_concurrent_predict()
    }
}

/// Predicts every row of a sample in one batch.
pub fn predict_sample<T: Scalar, M: Model<T> + ?Sized>(
    model: &M,
    sample: &crate::data::EvalSample<T>,
) -> Result<Vec<Prediction<T>>> {
    if model.n_features() != sample.q() {
        return Err(XperError::Contract(format!(
            "model expects {} features, sample has {}",
            model.n_features(),
            sample.q()
        )));
    }
    model.predict(sample.features())
}
