use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::EvalSample;
use crate::error::{Result, XperError};
use crate::metrics::{sample_metric, MetricSpec};
use crate::models::Model;
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationImportance<T> {
    /// Oriented metric on the untouched sample.
    pub baseline: T,
    /// Mean drop in the oriented metric when column `j` is shuffled.
    pub drops: Vec<T>,
    /// `drops / Σ drops`, reported only when every drop is positive.
    pub normalized: Option<Vec<T>>,
}

/// Mean metric drop after reshuffling each column, over `repeats` shuffles.
///
/// The metric is re-fitted on each shuffled sample, so the drop compares two
/// ordinary sample metrics.
pub fn permutation_importance<T, M>(
    sample: &EvalSample<T>,
    model: &M,
    spec: MetricSpec,
    repeats: usize,
    seed: u64,
) -> Result<PermutationImportance<T>>
where
    T: Scalar,
    M: Model<T> + ?Sized,
{
    if repeats == 0 {
        return Err(XperError::Config("permutation importance needs at least one repeat".into()));
    }
    let baseline = sample_metric(spec, sample, model)?;
    let mut drops = Vec::with_capacity(sample.q());
    for j in 0..sample.q() {
        let mut rng = seeded(derive_seed(seed, j as u64));
        let mut total = T::zero();
        for _ in 0..repeats {
            let mut order: Vec<usize> = (0..sample.n()).collect();
            order.shuffle(&mut rng);
            let shuffled = sample.shuffle_column(j, &order)?;
            total += baseline - sample_metric(spec, &shuffled, model)?;
        }
        drops.push(total / T::from_count(repeats));
    }
    let normalized = drops.iter().all(|&d| d > T::zero()).then(|| {
        let sum: T = drops.iter().copied().sum();
        drops.iter().map(|&d| d / sum).collect()
    });
    Ok(PermutationImportance {
        baseline,
        drops,
        normalized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use crate::metrics::MetricId;
    use crate::models::{CartConfig, fit_cart};

    #[test]
    fn ignored_feature_has_zero_drop() {
        // x1 separates the classes, x2 is noise the tree never splits on.
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| if i >= 20 { 1.0 } else { 0.0 }).collect();
        let s = EvalSample::from_rows(&rows, y, Task::BinaryClassification).unwrap();
        let tree = fit_cart(&s, &CartConfig { max_depth: 1, ..Default::default() }).unwrap();
        assert_eq!(tree.used_features(), vec![0]);
        let pi = permutation_importance(&s, &tree, MetricSpec::new(MetricId::Auc), 5, 3).unwrap();
        assert_eq!(pi.drops[1], 0.0);
        assert_eq!(pi.baseline, 1.0);
        assert!(pi.drops[0] > 0.3, "{:?}", pi.drops);
        assert!(pi.normalized.is_none());
    }
}
