//! XPER: Shapley decomposition of a model's sample performance metric into
//! a benchmark value plus one contribution per feature.
//!
//! The core is generic over the scalar type (`f32` or `f64`); exact
//! coalition weights are available as 128-bit rationals. The aliases at the
//! crate root fix the scalar to `f64`.

pub mod coalition;
pub mod data;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod oracles;
pub mod rng;
pub mod scalar;
pub mod wls;

pub use coalition::{coalition_value, CoalitionValueTable, EngineOptions, ExactWeight};
pub use data::{load_csv, write_csv, EvalSample, FeatureKind, LoadOptions, SplitSpec, Task};
pub use error::{Result, XperError};
pub use exact::{xper_exact, ExactOptions, Estimator, IndividualXper, XperReport};
pub use metrics::{AucReference, CompositeMetric, Contribution, FittedMetric, MetricId, MetricSpec};
pub use models::{Model, ModelAdapter, Prediction};
pub use scalar::Scalar;
pub use wls::{sample_coalitions, xper_wls, xper_wls_with_coalitions, WlsOptions};

pub type Sample = EvalSample<f64>;
pub type Report = XperReport<f64>;
pub type Metric = FittedMetric<f64>;
pub type Adapter = ModelAdapter<f64>;
pub type Linear = models::LinearModel<f64>;
pub type Tree = models::DecisionTree<f64>;
