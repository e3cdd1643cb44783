//! Coalition weights, hybrid rows and memoised coalition values.
//!
//! A coalition is a bit mask over feature indices: bit `j` set means
//! feature `j` keeps the instance's own value. For a coalition `S` the
//! per-instance value is
//!
//! ```text
//! v_i(S) = (1/n) Σ_u G(y_i; hybrid(x_i, x_u, S))
//! ```
//!
//! and the sample value `v(S)` is the mean of `v_i(S)` over instances.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use num_rational::Ratio;
use rayon::prelude::*;

use crate::data::EvalSample;
use crate::error::{Result, XperError};
use crate::metrics::Contribution;
use crate::models::{Model, Prediction};
use crate::scalar::{compensated_mean, CompensatedSum, Scalar};

/// Exact weights use 128-bit rationals.
pub type ExactWeight = Ratio<i128>;

/// Largest feature count a mask can hold.
pub const MAX_FEATURES: usize = 63;

#[inline]
pub fn full_mask(q: usize) -> u64 {
    if q >= 64 {
        u64::MAX
    } else {
        (1u64 << q) - 1
    }
}

#[inline]
pub fn coalition_size(mask: u64) -> usize {
    mask.count_ones() as usize
}

/// Feature indices present in `mask`, ascending.
pub fn members(mask: u64) -> impl Iterator<Item = usize> {
    (0..64).filter(move |j| mask >> j & 1 == 1)
}

/// `C(n, k)` as an exact integer.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// `|S|! (q - |S| - 1)! / q!`, i.e. `1 / (q C(q-1, |S|))`, as a rational.
pub fn shapley_weight_exact(q: usize, size: usize) -> Result<ExactWeight> {
    if q == 0 || size >= q {
        return Err(XperError::Domain(format!(
            "coalition size {size} out of range for q = {q} (needs 0 <= size <= q - 1)"
        )));
    }
    let denom = q as u128 * binomial(q - 1, size);
    Ok(Ratio::new(1, i128::try_from(denom).expect("q is small")))
}

pub fn shapley_weight<T: Scalar>(q: usize, size: usize) -> Result<T> {
    let w = shapley_weight_exact(q, size)?;
    Ok(T::lit(*w.numer() as f64) / T::lit(*w.denom() as f64))
}

/// `(q - 1) / (C(q, |S|) |S| (q - |S|))`, the least-squares coalition weight.
pub fn kernel_weight_exact(q: usize, size: usize) -> Result<ExactWeight> {
    if size == 0 || size >= q {
        return Err(XperError::Domain(format!(
            "kernel weight is infinite for coalition size {size} with q = {q} (needs 1 <= size <= q - 1)"
        )));
    }
    let denom = binomial(q, size) * (size * (q - size)) as u128;
    Ok(Ratio::new(
        (q - 1) as i128,
        i128::try_from(denom).expect("q is small"),
    ))
}

pub fn kernel_weight<T: Scalar>(q: usize, size: usize) -> Result<T> {
    let w = kernel_weight_exact(q, size)?;
    Ok(T::lit(*w.numer() as f64) / T::lit(*w.denom() as f64))
}

/// Coordinates in `mask` come from `v_row`, the rest from `u_row`.
pub fn hybrid_row<T: Copy>(v_row: &[T], u_row: &[T], mask: u64) -> Result<Vec<T>> {
    if v_row.len() != u_row.len() {
        return Err(XperError::Contract(format!(
            "rows of width {} and {}",
            v_row.len(),
            u_row.len()
        )));
    }
    Ok(v_row
        .iter()
        .zip(u_row)
        .enumerate()
        .map(|(j, (&v, &u))| if mask >> j & 1 == 1 { v } else { u })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EngineOptions {
    /// Hybrid rows per prediction call, rounded to whole donor blocks.
    pub chunk_rows: usize,
    /// Keep per-instance values `v_i(S)`.
    pub individual: bool,
    /// Use rayon when the model allows concurrent prediction.
    pub parallel: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            chunk_rows: 8192,
            individual: true,
            parallel: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskValue<T> {
    pub global: T,
    pub per_instance: Option<Vec<T>>,
}

/// Donor blocks evaluated together before an ordered merge; bounds memory.
const BLOCK_GROUP: usize = 64;

/// Memo of coalition values for one (sample, model, metric) triple.
pub struct CoalitionValueTable<'a, T, M: ?Sized, C: ?Sized> {
    sample: &'a EvalSample<T>,
    model: &'a M,
    metric: &'a C,
    options: EngineOptions,
    memo: Mutex<HashMap<u64, Arc<MaskValue<T>>>>,
    base_predictions: Mutex<Option<Arc<Vec<Prediction<T>>>>>,
    predictions: AtomicU64,
}

impl<'a, T, M, C> CoalitionValueTable<'a, T, M, C>
where
    T: Scalar,
    M: Model<T> + ?Sized,
    C: Contribution<T> + ?Sized,
{
    pub fn new(sample: &'a EvalSample<T>, model: &'a M, metric: &'a C, options: EngineOptions) -> Result<Self> {
        if model.n_features() != sample.q() {
            return Err(XperError::Contract(format!(
                "model expects {} features, sample has {}",
                model.n_features(),
                sample.q()
            )));
        }
        if sample.q() > MAX_FEATURES {
            return Err(XperError::Range(format!(
                "{} features exceed the mask width of {MAX_FEATURES}",
                sample.q()
            )));
        }
        Ok(Self {
            sample,
            model,
            metric,
            options,
            memo: Mutex::new(HashMap::new()),
            base_predictions: Mutex::new(None),
            predictions: AtomicU64::new(0),
        })
    }

    pub fn q(&self) -> usize {
        self.sample.q()
    }

    pub fn n(&self) -> usize {
        self.sample.n()
    }

    pub fn sample(&self) -> &'a EvalSample<T> {
        self.sample
    }

    pub fn metric(&self) -> &'a C {
        self.metric
    }

    pub fn options(&self) -> EngineOptions {
        self.options
    }

    /// Number of hybrid rows sent to the model so far.
    pub fn predictions(&self) -> u64 {
        self.predictions.load(Ordering::Relaxed)
    }

    pub fn evaluated(&self) -> usize {
        self.memo.lock().expect("memo lock").len()
    }

    fn parallel(&self) -> bool {
        self.options.parallel && self.model.supports_concurrent_predict()
    }

    fn predict(&self, rows: &[T]) -> Result<Vec<Prediction<T>>> {
        let preds = self.model.predict(rows)?;
        let expected = rows.len() / self.q();
        if preds.len() != expected {
            return Err(XperError::Contract(format!(
                "model returned {} predictions for {expected} rows",
                preds.len()
            )));
        }
        self.predictions.fetch_add(expected as u64, Ordering::Relaxed);
        Ok(preds)
    }

    /// Predictions on the unmodified sample, computed once.
    pub fn base_predictions(&self) -> Result<Arc<Vec<Prediction<T>>>> {
        let mut slot = self.base_predictions.lock().expect("prediction lock");
        if let Some(p) = slot.as_ref() {
            return Ok(Arc::clone(p));
        }
        let preds = Arc::new(self.predict(self.sample.features())?);
        *slot = Some(Arc::clone(&preds));
        Ok(preds)
    }

    /// The memoised entry for `mask`, computing it on first use.
    pub fn get(&self, mask: u64) -> Result<Arc<MaskValue<T>>> {
        if mask & !full_mask(self.q()) != 0 {
            return Err(XperError::Range(format!(
                "mask {mask:#b} has bits beyond q = {}",
                self.q()
            )));
        }
        if let Some(v) = self.memo.lock().expect("memo lock").get(&mask) {
            return Ok(Arc::clone(v));
        }
        let value = Arc::new(self.compute(mask).map_err(|e| e.in_coalition(mask))?);
        let mut memo = self.memo.lock().expect("memo lock");
        Ok(Arc::clone(memo.entry(mask).or_insert(value)))
    }

    /// Sample value `v(S)`.
    pub fn value(&self, mask: u64) -> Result<T> {
        self.get(mask).map(|v| v.global)
    }

    /// Per-instance values `v_i(S)`.
    pub fn instance_values(&self, mask: u64) -> Result<Arc<MaskValue<T>>> {
        if !self.options.individual {
            return Err(XperError::Contract(
                "per-instance values were not requested for this table".into(),
            ));
        }
        self.get(mask)
    }

    /// Evaluates every listed mask, concurrently when the model allows it.
    pub fn fill(&self, masks: &[u64]) -> Result<()> {
        let mut todo: Vec<u64> = {
            let memo = self.memo.lock().expect("memo lock");
            masks.iter().copied().filter(|m| !memo.contains_key(m)).collect()
        };
        todo.sort_unstable();
        todo.dedup();
        if todo.iter().any(|&m| m == 0 || m == full_mask(self.q())) {
            self.base_predictions()?;
        }
        if self.parallel() {
            todo.par_iter().try_for_each(|&m| self.get(m).map(|_| ()))
        } else {
            todo.iter().try_for_each(|&m| self.get(m).map(|_| ()))
        }
    }

    fn compute(&self, mask: u64) -> Result<MaskValue<T>> {
        let n = self.n();
        let per_instance: Vec<T> = if mask == full_mask(self.q()) {
            // Every hybrid is the instance itself. The donor average still
            // runs so that rounding matches the other masks exactly.
            let preds = self.base_predictions()?;
            self.accumulate(|u_range| Ok(u_range.map(|_| preds.to_vec()).collect()))?
        } else if mask == 0 {
            // Every hybrid is the donor row, whatever the instance.
            let preds = self.base_predictions()?;
            self.accumulate(|u_range| {
                Ok(u_range.map(|u| vec![preds[u]; n]).collect())
            })?
        } else {
            let set: Vec<usize> = members(mask).collect();
            let q = self.q();
            self.accumulate(|u_range| {
                let donors: Vec<usize> = u_range.collect();
                let mut rows = Vec::with_capacity(donors.len() * n * q);
                for &u in &donors {
                    let u_row = self.sample.row(u);
                    for v in 0..n {
                        let start = rows.len();
                        rows.extend_from_slice(u_row);
                        let v_row = self.sample.row(v);
                        for &j in &set {
                            rows[start + j] = v_row[j];
                        }
                    }
                }
                let preds = self.predict(&rows)?;
                Ok(preds.chunks_exact(n).map(<[_]>::to_vec).collect())
            })?
        };
        let global = compensated_mean(&per_instance);
        Ok(MaskValue {
            global,
            per_instance: self.options.individual.then_some(per_instance),
        })
    }

    /// Sums contributions over donors `u` for every instance, divided by `n`.
    ///
    /// `block` returns, for each donor in its range, the predictions on the
    /// `n` hybrid rows built from that donor. Donors are processed in fixed
    /// blocks merged in index order, so results do not depend on scheduling.
    fn accumulate<F>(&self, block: F) -> Result<Vec<T>>
    where
        F: Fn(std::ops::Range<usize>) -> Result<Vec<Vec<Prediction<T>>>> + Sync,
    {
        let n = self.n();
        let ys = self.sample.target();
        let donors_per_block = (self.options.chunk_rows / n).max(1);
        let blocks: Vec<std::ops::Range<usize>> = (0..n)
            .step_by(donors_per_block)
            .map(|s| s..(s + donors_per_block).min(n))
            .collect();
        let run = |range: &std::ops::Range<usize>| -> Result<Vec<CompensatedSum<T>>> {
            let mut sums = vec![CompensatedSum::new(); n];
            let mut out = vec![T::zero(); n];
            for preds in block(range.clone())? {
                self.metric.contributions(ys, &preds, &mut out)?;
                for (s, &g) in sums.iter_mut().zip(&out) {
                    s.add(g);
                }
            }
            Ok(sums)
        };
        let mut total = vec![CompensatedSum::new(); n];
        for group in blocks.chunks(BLOCK_GROUP) {
            let partial: Vec<Vec<CompensatedSum<T>>> = if self.parallel() {
                group.par_iter().map(run).collect::<Result<_>>()?
            } else {
                group.iter().map(run).collect::<Result<_>>()?
            };
            for sums in &partial {
                for (t, s) in total.iter_mut().zip(sums) {
                    t.merge(s);
                }
            }
        }
        let nn = T::from_count(n);
        Ok(total.iter().map(|s| s.value() / nn).collect())
    }
}

/// One-off `v(S)` without keeping a table around.
pub fn coalition_value<T, M, C>(sample: &EvalSample<T>, model: &M, metric: &C, mask: u64) -> Result<T>
where
    T: Scalar,
    M: Model<T> + ?Sized,
    C: Contribution<T> + ?Sized,
{
    let options = EngineOptions {
        individual: false,
        ..Default::default()
    };
    CoalitionValueTable::new(sample, model, metric, options)?.value(mask)
}
