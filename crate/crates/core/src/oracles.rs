//! Independent reference implementations used to check the estimators.
//!
//! Nothing here shares code with the coalition engine beyond the model and
//! metric traits: coalition values are rebuilt with plain loops, Shapley
//! values come straight from the factorial definition, and the linear-model
//! decompositions are closed forms in sample moments.

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use crate::data::EvalSample;
use crate::error::{Result, XperError};
use crate::metrics::Contribution;
use crate::models::{LinearModel, Model, Prediction};
use crate::scalar::{covariance, mean_and_variance, Scalar};

/// Largest `q` accepted by the brute-force routines.
pub const BRUTE_FORCE_LIMIT: usize = 12;

/// Largest absolute feature correlation treated as "diagonal" covariance.
pub const DIAGONAL_TOLERANCE: f64 = 0.1;

fn factorial(k: usize) -> u64 {
    (1..=k as u64).product()
}

/// Shapley values of `value_fn` from the factorial-weight definition.
///
/// Returns `(value_fn(∅), phi)`. Works for any numeric type with exact
/// integer construction, including rationals.
pub fn brute_force_shapley<V, F>(value_fn: F, q: usize) -> Result<(V, Vec<V>)>
where
    V: Num + Clone + FromPrimitive,
    F: Fn(u64) -> V,
{
    if q > BRUTE_FORCE_LIMIT {
        return Err(XperError::Range(format!(
            "brute force accepts q <= {BRUTE_FORCE_LIMIT}, got {q}"
        )));
    }
    let count = 1u64 << q;
    let values: Vec<V> = (0..count).map(&value_fn).collect();
    let q_fact = V::from_u64(factorial(q)).expect("integer fits");
    let mut phi = Vec::with_capacity(q);
    for j in 0..q {
        let bit = 1u64 << j;
        let mut acc = V::zero();
        for mask in 0..count {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let w = V::from_u64(factorial(s) * factorial(q - s - 1)).expect("integer fits");
            let delta = values[(mask | bit) as usize].clone() - values[mask as usize].clone();
            acc = acc + w * delta / q_fact.clone();
        }
        phi.push(acc);
    }
    Ok((values[0].clone(), phi))
}

/// `v(S)` by explicit loops: for each donor `u`, every instance is hybridised
/// with `u`, scored, and the contributions are averaged over donors and then
/// over instances.
pub fn brute_force_coalition_value<T, M, C>(sample: &EvalSample<T>, model: &M, metric: &C, mask: u64) -> Result<T>
where
    T: Scalar,
    M: Model<T> + ?Sized,
    C: Contribution<T> + ?Sized,
{
    let per_instance = brute_force_instance_values(sample, model, metric, mask)?;
    let n = T::from_count(per_instance.len());
    Ok(per_instance.iter().fold(T::zero(), |a, &b| a + b) / n)
}

/// `v_i(S)` for every instance, by explicit loops.
pub fn brute_force_instance_values<T, M, C>(
    sample: &EvalSample<T>,
    model: &M,
    metric: &C,
    mask: u64,
) -> Result<Vec<T>>
where
    T: Scalar,
    M: Model<T> + ?Sized,
    C: Contribution<T> + ?Sized,
{
    let (n, q) = (sample.n(), sample.q());
    let mut totals = vec![T::zero(); n];
    let mut rows = Vec::with_capacity(n * q);
    let mut out = vec![T::zero(); n];
    for u in 0..n {
        rows.clear();
        let donor = sample.row(u);
        for i in 0..n {
            let own = sample.row(i);
            for j in 0..q {
                rows.push(if mask >> j & 1 == 1 { own[j] } else { donor[j] });
            }
        }
        let preds = model.predict(&rows)?;
        metric.contributions(sample.target(), &preds, &mut out)?;
        for (t, o) in totals.iter_mut().zip(&out) {
            *t += *o;
        }
    }
    let nn = T::from_count(n);
    Ok(totals.into_iter().map(|t| t / nn).collect())
}

/// Global `(phi0, phi)` from brute-force coalition values.
pub fn brute_force_xper<T, M, C>(sample: &EvalSample<T>, model: &M, metric: &C) -> Result<(T, Vec<T>)>
where
    T: Scalar,
    M: Model<T> + ?Sized,
    C: Contribution<T> + ?Sized,
{
    let q = sample.q();
    if q > BRUTE_FORCE_LIMIT {
        return Err(XperError::Range(format!("brute force accepts q <= {BRUTE_FORCE_LIMIT}")));
    }
    let values: Vec<T> = (0..1u64 << q)
        .map(|m| brute_force_coalition_value(sample, model, metric, m))
        .collect::<Result<_>>()?;
    brute_force_shapley(|m| values[m as usize], q)
}

/// SHAP values with marginal (interventional) expectations over the sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapValues<T> {
    /// Mean prediction over the sample.
    pub base: T,
    /// `values[i][j]`.
    pub values: Vec<Vec<T>>,
}

/// SHAP values of the model output, instance by instance.
pub fn shap_values<T, M>(sample: &EvalSample<T>, model: &M) -> Result<ShapValues<T>>
where
    T: Scalar,
    M: Model<T> + ?Sized,
{
    let (n, q) = (sample.n(), sample.q());
    if q > BRUTE_FORCE_LIMIT {
        return Err(XperError::Range(format!("SHAP oracle accepts q <= {BRUTE_FORCE_LIMIT}")));
    }
    let nn = T::from_count(n);
    let mut rows = Vec::with_capacity(n * q);
    // f_S(x_i) for every instance and mask.
    let count = 1usize << q;
    let mut expected = vec![vec![T::zero(); count]; n];
    for (i, row_values) in expected.iter_mut().enumerate() {
        let own = sample.row(i);
        for (mask, slot) in row_values.iter_mut().enumerate() {
            rows.clear();
            for u in 0..n {
                let donor = sample.row(u);
                for j in 0..q {
                    rows.push(if mask >> j & 1 == 1 { own[j] } else { donor[j] });
                }
            }
            let preds = model.predict(&rows)?;
            *slot = preds.iter().map(Prediction::value).fold(T::zero(), |a, b| a + b) / nn;
        }
    }
    let base = expected.iter().map(|e| e[0]).fold(T::zero(), |a, b| a + b) / nn;
    let values = expected
        .iter()
        .map(|e| brute_force_shapley(|m| e[m as usize], q).map(|(_, phi)| phi))
        .collect::<Result<_>>()?;
    Ok(ShapValues { base, values })
}

/// `beta_j (x_ij − mean_j)`: SHAP values of a linear index.
pub fn linear_shap<T: Scalar>(sample: &EvalSample<T>, model: &LinearModel<T>) -> Result<Vec<Vec<T>>> {
    if model.coefficients.len() != sample.q() {
        return Err(XperError::Contract(format!(
            "{} coefficients for {} features",
            model.coefficients.len(),
            sample.q()
        )));
    }
    let means: Vec<T> = (0..sample.q()).map(|j| mean_and_variance(&sample.column(j)).0).collect();
    Ok(sample
        .rows()
        .map(|row| {
            row.iter()
                .zip(&means)
                .zip(&model.coefficients)
                .map(|((&x, &m), &b)| b * (x - m))
                .collect()
        })
        .collect())
}

/// Column means of absolute SHAP values.
pub fn mean_abs_shap<T: Scalar>(values: &[Vec<T>]) -> Vec<T> {
    let q = values.first().map_or(0, Vec::len);
    let n = T::from_count(values.len().max(1));
    (0..q)
        .map(|j| values.iter().map(|r| r[j].abs()).fold(T::zero(), |a, b| a + b) / n)
        .collect()
}

/// Moments of a linear model `f(x) = c + x·beta_hat` and its data.
///
/// Variances and covariances are population (divide by `n`) moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearDgpMoments<T> {
    pub beta_hat: Vec<T>,
    pub intercept: T,
    pub mu_y: T,
    pub sigma_y2: T,
    /// `cov(y, x_j)`.
    pub sigma_yx: Vec<T>,
    pub sigma_x2: Vec<T>,
    pub mu_x: Vec<T>,
    /// `E(x_j^2)`.
    pub second_x: Vec<T>,
    /// Row-major `q × q` feature covariance.
    pub sigma_xx: Vec<T>,
}

impl<T: Scalar> LinearDgpMoments<T> {
    /// Sample moments of `sample` paired with fitted coefficients.
    pub fn empirical(sample: &EvalSample<T>, intercept: T, beta_hat: Vec<T>) -> Result<Self> {
        let q = sample.q();
        if beta_hat.len() != q {
            return Err(XperError::Contract(format!("{} coefficients for {q} features", beta_hat.len())));
        }
        let y = sample.target();
        let (mu_y, sigma_y2) = mean_and_variance(y);
        if !(sigma_y2 > T::zero()) {
            return Err(XperError::Domain("target variance is zero".into()));
        }
        let columns: Vec<Vec<T>> = (0..q).map(|j| sample.column(j)).collect();
        let mut mu_x = Vec::with_capacity(q);
        let mut sigma_x2 = Vec::with_capacity(q);
        let mut second_x = Vec::with_capacity(q);
        let mut sigma_yx = Vec::with_capacity(q);
        for c in &columns {
            let (m, v) = mean_and_variance(c);
            mu_x.push(m);
            sigma_x2.push(v);
            second_x.push(v + m * m);
            sigma_yx.push(covariance(y, c));
        }
        let mut sigma_xx = vec![T::zero(); q * q];
        for a in 0..q {
            for b in 0..q {
                sigma_xx[a * q + b] = if a == b { sigma_x2[a] } else { covariance(&columns[a], &columns[b]) };
            }
        }
        Ok(Self {
            beta_hat,
            intercept,
            mu_y,
            sigma_y2,
            sigma_yx,
            sigma_x2,
            mu_x,
            second_x,
            sigma_xx,
        })
    }

    /// Sample moments for a fitted linear model.
    pub fn from_model(sample: &EvalSample<T>, model: &LinearModel<T>) -> Result<Self> {
        Self::empirical(
            sample,
            model.intercept.unwrap_or_else(T::zero),
            model.coefficients.clone(),
        )
    }

    /// True moments of `y = intercept + x·beta + e` with independent centred
    /// features and `beta_hat = beta`.
    pub fn population(intercept: T, beta: Vec<T>, cov_diag: &[T], noise_var: T) -> Result<Self> {
        let q = beta.len();
        if cov_diag.len() != q {
            return Err(XperError::Contract(format!("{} variances for {q} slopes", cov_diag.len())));
        }
        let explained = beta.iter().zip(cov_diag).fold(T::zero(), |a, (&b, &v)| a + b * b * v);
        let mut sigma_xx = vec![T::zero(); q * q];
        for j in 0..q {
            sigma_xx[j * q + j] = cov_diag[j];
        }
        Ok(Self {
            sigma_yx: beta.iter().zip(cov_diag).map(|(&b, &v)| b * v).collect(),
            beta_hat: beta,
            intercept,
            mu_y: intercept,
            sigma_y2: explained + noise_var,
            sigma_x2: cov_diag.to_vec(),
            mu_x: vec![T::zero(); q],
            second_x: cov_diag.to_vec(),
            sigma_xx,
        })
    }

    pub fn q(&self) -> usize {
        self.beta_hat.len()
    }

    /// Largest absolute off-diagonal feature correlation.
    pub fn max_abs_correlation(&self) -> T {
        let q = self.q();
        let mut worst = T::zero();
        for a in 0..q {
            for b in (a + 1)..q {
                let denom = (self.sigma_x2[a] * self.sigma_x2[b]).sqrt();
                if denom > T::zero() {
                    worst = worst.max((self.sigma_xx[a * q + b] / denom).abs());
                }
            }
        }
        worst
    }

    /// Refuses moments whose features are correlated beyond `tolerance`.
    pub fn check_diagonal(&self, tolerance: f64) -> Result<()> {
        let worst = self.max_abs_correlation();
        if worst > T::lit(tolerance) {
            return Err(XperError::Domain(format!(
                "closed forms need uncorrelated features; largest |corr| is {worst}"
            )));
        }
        Ok(())
    }

    /// `mean(y) − mean(f)`.
    fn bias(&self) -> T {
        let mean_f = self
            .beta_hat
            .iter()
            .zip(&self.mu_x)
            .fold(self.intercept, |a, (&b, &m)| a + b * m);
        self.mu_y - mean_f
    }

    /// `var(f) = beta' Σ_x beta`.
    fn prediction_variance(&self) -> T {
        let q = self.q();
        let mut v = T::zero();
        for a in 0..q {
            for b in 0..q {
                v += self.beta_hat[a] * self.beta_hat[b] * self.sigma_xx[a * q + b];
            }
        }
        v
    }
}

/// R² decomposition of a linear model: `phi_j = 2 beta_j cov(y, x_j) / var(y)`
/// and `phi0 = −(var(f) + bias²) / var(y)`.
pub fn closed_form_r2_xper<T: Scalar>(m: &LinearDgpMoments<T>) -> Result<(T, Vec<T>)> {
    m.check_diagonal(DIAGONAL_TOLERANCE)?;
    let two = T::lit(2.0);
    let phi = m
        .beta_hat
        .iter()
        .zip(&m.sigma_yx)
        .map(|(&b, &c)| two * b * c / m.sigma_y2)
        .collect();
    let bias = m.bias();
    let phi0 = -(m.prediction_variance() + bias * bias) / m.sigma_y2;
    Ok((phi0, phi))
}

/// Oriented-MSE decomposition: `phi_j = 2 beta_j cov(y, x_j)`,
/// `phi0 = −var(f) − var(y) − bias²`, `pm = phi0 + Σ phi_j`.
pub fn closed_form_mse_xper<T: Scalar>(m: &LinearDgpMoments<T>) -> Result<(T, Vec<T>, T)> {
    m.check_diagonal(DIAGONAL_TOLERANCE)?;
    let two = T::lit(2.0);
    let phi: Vec<T> = m.beta_hat.iter().zip(&m.sigma_yx).map(|(&b, &c)| two * b * c).collect();
    let bias = m.bias();
    let phi0 = -m.prediction_variance() - m.sigma_y2 - bias * bias;
    let pm = phi.iter().fold(phi0, |a, &b| a + b);
    Ok((phi0, phi, pm))
}

/// Individual R² contributions of one instance for a linear model.
///
/// With an intercept `c` the target enters as `y_i − c`; the expression is
/// otherwise term-for-term the instance-level decomposition of
/// `1 − (y_i − f(x_i))² / var(y)`.
pub fn closed_form_individual_r2<T: Scalar>(m: &LinearDgpMoments<T>, x_i: &[T], y_i: T) -> Result<Vec<T>> {
    let q = m.q();
    if x_i.len() != q {
        return Err(XperError::Contract(format!("row of width {} for q = {q}", x_i.len())));
    }
    let two = T::lit(2.0);
    let y = y_i - m.intercept;
    Ok((0..q)
        .map(|j| {
            let bj = m.beta_hat[j];
            let mut others = T::zero();
            let mut cross = T::zero();
            for k in (0..q).filter(|&k| k != j) {
                others += m.beta_hat[k] * (x_i[k] + m.mu_x[k]);
                cross += m.beta_hat[k] * bj * m.sigma_xx[k * q + j];
            }
            let a = two * y - others;
            (bj * (x_i[j] - m.mu_x[j]) * a - bj * bj * (x_i[j] * x_i[j] - m.second_x[j]) + cross) / m.sigma_y2
        })
        .collect())
}

/// Single-feature oriented-MSE relation:
/// `phi_i1 = 2 e_i s_i + s_i² + var(f)` with `s_i = f(x_i) − mean(f)` and
/// `e_i = y_i − f(x_i)`.
pub fn single_feature_mse_individual<T: Scalar>(ys: &[T], predictions: &[T]) -> Result<Vec<T>> {
    if ys.len() != predictions.len() {
        return Err(XperError::Contract("targets and predictions differ in length".into()));
    }
    let (mean_f, var_f) = mean_and_variance(predictions);
    let two = T::lit(2.0);
    Ok(ys
        .iter()
        .zip(predictions)
        .map(|(&y, &f)| {
            let s = f - mean_f;
            two * (y - f) * s + s * s + var_f
        })
        .collect())
}

/// `2 cov(y, f)`: the accuracy decomposition total for a hard classifier.
pub fn accuracy_explained_total<T: Scalar>(ys: &[T], labels: &[T]) -> T {
    T::lit(2.0) * covariance(ys, labels)
}
