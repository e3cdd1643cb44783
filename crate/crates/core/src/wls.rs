//! Sampled-coalition approximation by kernel-weighted least squares.
//!
//! Each sampled coalition `S_k` gives one regression row
//! `v(S_k) ≈ phi0 + Σ_j phi_j z_kj` with `z_kj = 1(j ∈ S_k)`, weighted by
//! the kernel weight of `|S_k|`. By default the fit is constrained so that
//! `phi0 = v(∅)` and `Σ_j phi_j = v(full) − v(∅)`; the constraints are
//! imposed by eliminating the intercept and the last coefficient.

use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coalition::{binomial, full_mask, kernel_weight, CoalitionValueTable, EngineOptions, MAX_FEATURES};
use crate::data::EvalSample;
use crate::error::{Result, XperError};
use crate::exact::{base_outputs, efficiency_residual, shares, Diagnostics, Estimator, IndividualXper, XperReport};
use crate::linalg::{Cholesky, NormalEquations, RankTolerance};
use crate::metrics::Contribution;
use crate::models::{Model, Prediction};
use crate::rng::seeded;
use crate::scalar::Scalar;

const RANK_TOLERANCE: f64 = 1e-10;

/// How coalitions are drawn from the `2^q − 2` admissible ones.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoalitionSampling {
    /// Uniform without replacement.
    #[default]
    Uniform,
    /// Without replacement, each draw proportional to its kernel weight.
    KernelProportional,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WlsOptions {
    pub k_samples: usize,
    pub seed: u64,
    pub individual: bool,
    /// Enforce `phi0 = v(∅)` and exact efficiency.
    pub constrained: bool,
    pub sampling: CoalitionSampling,
    pub engine: EngineOptions,
}

impl WlsOptions {
    pub fn new(k_samples: usize, seed: u64) -> Self {
        Self {
            k_samples,
            seed,
            individual: false,
            constrained: true,
            sampling: CoalitionSampling::Uniform,
            engine: EngineOptions::default(),
        }
    }
}

fn admissible(q: usize) -> Result<u64> {
    if q == 0 || q > MAX_FEATURES {
        return Err(XperError::Range(format!("q = {q} outside 1..={MAX_FEATURES}")));
    }
    Ok(full_mask(q) - 1)
}

fn check_k(q: usize, k: usize) -> Result<u64> {
    let total = admissible(q)?;
    if k == 0 || k as u64 > total {
        return Err(XperError::Range(format!(
            "K = {k} outside 1..={total} (2^{q} − 2 admissible coalitions)"
        )));
    }
    Ok(total)
}

/// `K` distinct coalitions, never empty or full, uniformly without replacement.
pub fn sample_coalitions(q: usize, k: usize, seed: u64) -> Result<Vec<u64>> {
    let total = check_k(q, k)?;
    let total = usize::try_from(total)
        .map_err(|_| XperError::Range(format!("q = {q} too large to index")))?;
    let mut rng = seeded(seed);
    Ok(index::sample(&mut rng, total, k)
        .into_iter()
        .map(|i| i as u64 + 1)
        .collect())
}

/// `K` distinct coalitions drawn with probability proportional to their
/// kernel weight.
pub fn sample_coalitions_kernel(q: usize, k: usize, seed: u64) -> Result<Vec<u64>> {
    let total = check_k(q, k)?;
    let mut rng = seeded(seed);
    if k as u64 == total {
        return Ok((1..=total).collect());
    }
    // A size class s carries total mass C(q, s) * w(s) = (q - 1) / (s (q - s)).
    let size_mass: Vec<f64> = (1..q).map(|s| 1.0 / (s * (q - s)) as f64).collect();
    let mass_total: f64 = size_mass.iter().sum();
    let mut remaining: Vec<u128> = (1..q).map(|s| binomial(q, s)).collect();
    let mut chosen = std::collections::HashSet::with_capacity(k);
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let mut r = rng.random::<f64>() * mass_total;
        let mut s = q - 1;
        for (idx, m) in size_mass.iter().enumerate() {
            if r < *m {
                s = idx + 1;
                break;
            }
            r -= m;
        }
        if remaining[s - 1] == 0 {
            continue;
        }
        let members = index::sample(&mut rng, q, s);
        let mask = members.into_iter().fold(0u64, |m, j| m | 1 << j);
        if chosen.insert(mask) {
            remaining[s - 1] -= 1;
            out.push(mask);
        }
    }
    Ok(out)
}

/// The weighted regression built from a set of coalitions.
#[derive(Clone, Debug, PartialEq)]
pub struct WlsSystem<T> {
    pub q: usize,
    pub masks: Vec<u64>,
    pub weights: Vec<T>,
    pub v_empty: T,
    pub v_full: T,
}

impl<T: Scalar> WlsSystem<T> {
    pub fn new(q: usize, masks: &[u64], v_empty: T, v_full: T) -> Result<Self> {
        let full = full_mask(q);
        let weights = masks
            .iter()
            .map(|&m| {
                if m == 0 || m == full || m & !full != 0 {
                    return Err(XperError::Range(format!(
                        "coalition {m:#b} is not admissible for q = {q}"
                    )));
                }
                kernel_weight(q, m.count_ones() as usize)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            q,
            masks: masks.to_vec(),
            weights,
            v_empty,
            v_full,
        })
    }

    /// Indicator row `z_k` for coalition `k`.
    pub fn indicators(&self, k: usize) -> Vec<T> {
        (0..self.q)
            .map(|j| if self.masks[k] >> j & 1 == 1 { T::one() } else { T::zero() })
            .collect()
    }

    fn constrained_row(&self, k: usize) -> (Vec<T>, T) {
        let z = self.indicators(k);
        let last = z[self.q - 1];
        (z[..self.q - 1].iter().map(|&zj| zj - last).collect(), last)
    }

    fn factor(&self, constrained: bool) -> Result<Cholesky<T>> {
        let dim = if constrained { self.q - 1 } else { self.q + 1 };
        let mut ne = NormalEquations::new(dim);
        for k in 0..self.masks.len() {
            let row = if constrained {
                self.constrained_row(k).0
            } else {
                unconstrained_row(&self.indicators(k))
            };
            ne.add_row(&row, T::zero(), self.weights[k]);
        }
        Cholesky::factor(&ne.gram, dim, RankTolerance::MaxDiagonal(RANK_TOLERANCE)).map_err(|j| {
            XperError::Rank(format!(
                "the weighted design loses rank at column {j} with K = {}; draw more coalitions",
                self.masks.len()
            ))
        })
    }

    /// Solves for `(phi0, phi)` given coalition targets and anchors.
    fn solve_with(&self, chol: &Cholesky<T>, constrained: bool, targets: &[T], v_empty: T, v_full: T) -> (T, Vec<T>) {
        if constrained {
            let delta = v_full - v_empty;
            let mut rhs = vec![T::zero(); self.q - 1];
            for (k, &g) in targets.iter().enumerate() {
                let (d, last) = self.constrained_row(k);
                let r = g - v_empty - last * delta;
                let wr = self.weights[k] * r;
                for (acc, dj) in rhs.iter_mut().zip(&d) {
                    *acc += wr * *dj;
                }
            }
            let mut phi = chol.solve(&rhs);
            let head: T = phi.iter().copied().sum();
            phi.push(delta - head);
            (v_empty, phi)
        } else {
            let mut rhs = vec![T::zero(); self.q + 1];
            for (k, &g) in targets.iter().enumerate() {
                let row = unconstrained_row(&self.indicators(k));
                let wg = self.weights[k] * g;
                for (acc, x) in rhs.iter_mut().zip(&row) {
                    *acc += wg * *x;
                }
            }
            let beta = chol.solve(&rhs);
            (beta[0], beta[1..].to_vec())
        }
    }

    /// Solves the regression for one set of targets.
    pub fn solve(&self, targets: &[T], constrained: bool) -> Result<(T, Vec<T>)> {
        let chol = self.factor(constrained)?;
        Ok(self.solve_with(&chol, constrained, targets, self.v_empty, self.v_full))
    }
}

fn unconstrained_row<T: Scalar>(z: &[T]) -> Vec<T> {
    std::iter::once(T::one()).chain(z.iter().copied()).collect()
}

/// Draws coalitions per `options` and fits the weighted regression.
pub fn xper_wls<T, M, C>(sample: &EvalSample<T>, model: &M, metric: &C, options: &WlsOptions) -> Result<XperReport<T>>
where
    T: Scalar,
    M: Model<T> + ?Sized,
    C: Contribution<T> + ?Sized,
{
    let masks = match options.sampling {
        CoalitionSampling::Uniform => sample_coalitions(sample.q(), options.k_samples, options.seed)?,
        CoalitionSampling::KernelProportional => {
            sample_coalitions_kernel(sample.q(), options.k_samples, options.seed)?
        }
    };
    xper_wls_with_coalitions(sample, model, metric, &masks, options)
}

/// Fits the weighted regression on caller-supplied coalitions.
pub fn xper_wls_with_coalitions<T, M, C>(
    sample: &EvalSample<T>,
    model: &M,
    metric: &C,
    masks: &[u64],
    options: &WlsOptions,
) -> Result<XperReport<T>>
where
    T: Scalar,
    M: Model<T> + ?Sized,
    C: Contribution<T> + ?Sized,
{
    let start = Instant::now();
    let engine = EngineOptions {
        individual: options.individual,
        ..options.engine
    };
    let table = CoalitionValueTable::new(sample, model, metric, engine)?;
    let mut report = wls_from_table(&table, masks, options)?;
    report.diagnostics.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}

/// Fits the weighted regression using (and filling) an existing table.
pub fn wls_from_table<T, M, C>(
    table: &CoalitionValueTable<'_, T, M, C>,
    masks: &[u64],
    options: &WlsOptions,
) -> Result<XperReport<T>>
where
    T: Scalar,
    M: Model<T> + ?Sized,
    C: Contribution<T> + ?Sized,
{
    let q = table.q();
    check_k(q, masks.len().max(1))?;
    if masks.is_empty() {
        return Err(XperError::Range("no coalitions supplied".into()));
    }
    let full = full_mask(q);
    let mut needed = masks.to_vec();
    needed.extend([0, full]);
    table.fill(&needed)?;
    let v_empty = table.value(0)?;
    let v_full = table.value(full)?;
    let system = WlsSystem::new(q, masks, v_empty, v_full)?;
    let chol = system.factor(options.constrained)?;
    let targets: Vec<T> = masks.iter().map(|&m| table.value(m)).collect::<Result<_>>()?;
    let (phi0, phi) = system.solve_with(&chol, options.constrained, &targets, v_empty, v_full);

    let (individual, individual_residual) = if options.individual && table.options().individual {
        let (preds, contribution) = base_outputs(table)?;
        let empty = table.instance_values(0)?;
        let empty = empty.per_instance.as_ref().expect("individual table");
        let entries: Vec<_> = masks.iter().map(|&m| table.instance_values(m)).collect::<Result<_>>()?;
        let mut phi_i = Vec::with_capacity(table.n());
        let mut phi0_i = Vec::with_capacity(table.n());
        let mut worst = T::zero();
        let mut targets_i = vec![T::zero(); masks.len()];
        for i in 0..table.n() {
            for (t, e) in targets_i.iter_mut().zip(&entries) {
                *t = e.per_instance.as_ref().expect("individual table")[i];
            }
            let (p0, row) = system.solve_with(&chol, options.constrained, &targets_i, empty[i], contribution[i]);
            let r = efficiency_residual(contribution[i], p0, &row);
            if r > worst {
                worst = r;
            }
            phi0_i.push(p0);
            phi_i.push(row);
        }
        (
            Some(IndividualXper {
                phi0: phi0_i,
                phi: phi_i,
                contribution,
                prediction: preds.iter().map(Prediction::value).collect(),
            }),
            Some(worst.as_f64()),
        )
    } else {
        (None, None)
    };

    Ok(XperReport {
        metric: table.metric().name(),
        feature_names: table.sample().feature_names().to_vec(),
        pm: v_full,
        pm_raw: table.metric().raw_value(v_full),
        phi0,
        shares: shares(v_full, phi0, &phi),
        efficiency_residual: efficiency_residual(v_full, phi0, &phi),
        phi,
        individual,
        estimator: Estimator::Wls,
        diagnostics: Diagnostics {
            coalitions: table.evaluated(),
            predictions: table.predictions(),
            individual_efficiency_residual: individual_residual,
            k_samples: Some(masks.len()),
            seed: Some(options.seed),
            constrained: Some(options.constrained),
            ..Default::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exhaustive_draw_returns_every_admissible_mask() {
        let mut masks = sample_coalitions(3, 6, 1).unwrap();
        masks.sort_unstable();
        assert_eq!(masks, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn draws_are_deterministic_distinct_and_admissible() {
        let a = sample_coalitions(10, 512, 77).unwrap();
        let b = sample_coalitions(10, 512, 77).unwrap();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 512);
        assert!(a.iter().all(|&m| m != 0 && m != full_mask(10)));
    }

    #[test]
    fn k_out_of_range() {
        assert!(matches!(sample_coalitions(3, 7, 1), Err(XperError::Range(_))));
        assert!(matches!(sample_coalitions(3, 0, 1), Err(XperError::Range(_))));
        assert!(matches!(sample_coalitions(1, 1, 1), Err(XperError::Range(_))));
    }

    #[test]
    fn kernel_sampling_takes_the_heaviest_masks_first() {
        // Sizes 1 and 9 carry the largest per-mask weight; with 200 draws
        // all twenty of them are taken.
        let masks = sample_coalitions_kernel(10, 200, 5).unwrap();
        let extreme = masks.iter().filter(|m| matches!(m.count_ones(), 1 | 9)).count();
        assert_eq!(extreme, 20);
        let mut sorted = masks.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 200);
    }

    #[test]
    fn system_weights_are_kernel_weights() {
        let masks = [0b001, 0b011, 0b110];
        let system = WlsSystem::<f64>::new(3, &masks, 0.0, 1.0).unwrap();
        assert_eq!(system.weights, vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        assert!(WlsSystem::<f64>::new(3, &[0b111], 0.0, 1.0).is_err());
    }

    #[test]
    fn additive_game_is_recovered_exactly() {
        // v(S) = Σ_{j∈S} c_j is linear in the indicators, so any full-rank
        // draw reproduces c.
        let c = [0.3, -0.1, 0.7, 0.2];
        let masks = sample_coalitions(4, 8, 3).unwrap();
        let value = |m: u64| -> f64 { (0..4).filter(|j| m >> j & 1 == 1).map(|j| c[j]).sum() };
        let system = WlsSystem::new(4, &masks, 0.0, c.iter().sum()).unwrap();
        let targets: Vec<f64> = masks.iter().map(|&m| value(m)).collect();
        for constrained in [true, false] {
            let (phi0, phi) = system.solve(&targets, constrained).unwrap();
            assert!(phi0.abs() < 1e-12);
            for (p, e) in phi.iter().zip(&c) {
                assert!((p - e).abs() < 1e-12);
            }
        }
    }
}
