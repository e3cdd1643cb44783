//! Exact XPER values by enumerating every coalition.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::coalition::{full_mask, shapley_weight, CoalitionValueTable, EngineOptions};
use crate::data::EvalSample;
use crate::error::{Result, XperError};
use crate::metrics::Contribution;
use crate::models::{Model, Prediction};
use crate::scalar::{compensated_mean, compensated_sum, CompensatedSum, Scalar};

/// Exact enumeration is refused above this many features unless overridden.
pub const EXACT_FEATURE_LIMIT: usize = 15;

/// Below this spread, shares of explained performance are undefined.
pub const SHARE_EPSILON: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Exact,
    Wls,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub coalitions: usize,
    pub predictions: u64,
    pub wall_time_ms: f64,
    /// Largest per-instance efficiency residual, when individual values exist.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub individual_efficiency_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constrained: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndividualXper<T> {
    pub phi0: Vec<T>,
    /// `phi[i][j]`: instance `i`, feature `j`.
    pub phi: Vec<Vec<T>>,
    /// Per-instance contribution `G_i` on the unmodified sample.
    pub contribution: Vec<T>,
    /// Model output for each instance (probability when available).
    pub prediction: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XperReport<T> {
    pub metric: String,
    pub feature_names: Vec<String>,
    /// Oriented sample metric (larger is better).
    pub pm: T,
    /// Sample metric on its conventional scale.
    pub pm_raw: T,
    pub phi0: T,
    pub phi: Vec<T>,
    /// `phi_j / (pm - phi0)`; `None` when the spread is negligible.
    pub shares: Vec<Option<T>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub individual: Option<IndividualXper<T>>,
    pub estimator: Estimator,
    pub efficiency_residual: T,
    pub diagnostics: Diagnostics,
}

/// One instance's decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceBreakdown<T> {
    pub index: usize,
    pub contribution: T,
    pub prediction: T,
    pub phi0: T,
    pub phi: Vec<T>,
}

impl<T: Scalar> XperReport<T> {
    pub fn q(&self) -> usize {
        self.phi.len()
    }

    pub fn instance(&self, index: usize) -> Result<InstanceBreakdown<T>> {
        individual_report(self, index)
    }
}

pub fn individual_report<T: Scalar>(report: &XperReport<T>, index: usize) -> Result<InstanceBreakdown<T>> {
    let ind = report
        .individual
        .as_ref()
        .ok_or_else(|| XperError::Contract("the report holds no individual values".into()))?;
    if index >= ind.phi0.len() {
        return Err(XperError::Range(format!(
            "instance {index} out of range for n = {}",
            ind.phi0.len()
        )));
    }
    Ok(InstanceBreakdown {
        index,
        contribution: ind.contribution[index],
        prediction: ind.prediction[index],
        phi0: ind.phi0[index],
        phi: ind.phi[index].clone(),
    })
}

pub(crate) fn shares<T: Scalar>(pm: T, phi0: T, phi: &[T]) -> Vec<Option<T>> {
    let spread = pm - phi0;
    if spread.abs() < T::lit(SHARE_EPSILON) {
        return vec![None; phi.len()];
    }
    phi.iter().map(|&p| Some(p / spread)).collect()
}

pub(crate) fn efficiency_residual<T: Scalar>(total: T, phi0: T, phi: &[T]) -> T {
    (total - phi0 - compensated_sum(phi.iter().copied())).abs()
}

/// Shapley values of a game given as a dense table indexed by mask.
pub fn shapley_from_table<T: Scalar>(values: &[T], q: usize) -> Result<Vec<T>> {
    if values.len() != 1usize << q {
        return Err(XperError::Contract(format!(
            "value table of length {} for q = {q}",
            values.len()
        )));
    }
    let weights: Vec<T> = (0..q).map(|s| shapley_weight(q, s)).collect::<Result<_>>()?;
    Ok((0..q)
        .map(|j| {
            let bit = 1u64 << j;
            let mut acc = CompensatedSum::new();
            for mask in 0..values.len() as u64 {
                if mask & bit == 0 {
                    let w = weights[mask.count_ones() as usize];
                    acc.add(w * (values[(mask | bit) as usize] - values[mask as usize]));
                }
            }
            acc.value()
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExactOptions {
    pub individual: bool,
    /// Lifts the feature-count guard rail.
    pub allow_large_q: bool,
    pub engine: EngineOptions,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            individual: true,
            allow_large_q: false,
            engine: EngineOptions::default(),
        }
    }
}

pub(crate) fn base_outputs<T, M, C>(
    table: &CoalitionValueTable<'_, T, M, C>,
) -> Result<(Vec<Prediction<T>>, Vec<T>)>
where
    T: Scalar,
    M: Model<T> + ?Sized,
    C: Contribution<T> + ?Sized,
{
    let preds = table.base_predictions()?;
    let full = table.instance_values(full_mask(table.q()))?;
    let contribution = full.per_instance.clone().expect("individual table");
    Ok(((*preds).clone(), contribution))
}

/// Exact XPER decomposition of `metric` for `model` on `sample`.
pub fn xper_exact<T, M, C>(sample: &EvalSample<T>, model: &M, metric: &C, options: &ExactOptions) -> Result<XperReport<T>>
where
    T: Scalar,
    M: Model<T> + ?Sized,
    C: Contribution<T> + ?Sized,
{
    let start = Instant::now();
    let q = sample.q();
    if q > EXACT_FEATURE_LIMIT && !options.allow_large_q {
        return Err(XperError::GuardRail {
            q,
            limit: EXACT_FEATURE_LIMIT,
        });
    }
    let engine = EngineOptions {
        individual: options.individual,
        ..options.engine
    };
    let table = CoalitionValueTable::new(sample, model, metric, engine)?;
    let masks: Vec<u64> = (0..=full_mask(q)).collect();
    table.fill(&masks)?;
    let mut report = exact_from_table(&table, options.individual)?;
    report.diagnostics.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}

/// Assembles the exact decomposition from a table holding every mask.
pub fn exact_from_table<T, M, C>(table: &CoalitionValueTable<'_, T, M, C>, individual: bool) -> Result<XperReport<T>>
where
    T: Scalar,
    M: Model<T> + ?Sized,
    C: Contribution<T> + ?Sized,
{
    let q = table.q();
    let n = table.n();
    let size = 1usize << q;
    let entries: Vec<_> = (0..size as u64).map(|m| table.get(m)).collect::<Result<_>>()?;
    let values: Vec<T> = entries.iter().map(|e| e.global).collect();
    let phi = shapley_from_table(&values, q)?;
    let pm = values[size - 1];
    let phi0 = values[0];

    let (individual_values, individual_residual) = if individual {
        let (preds, contribution) = base_outputs(table)?;
        let mut phi_i = Vec::with_capacity(n);
        let mut phi0_i = Vec::with_capacity(n);
        let mut worst = T::zero();
        let mut column = vec![T::zero(); size];
        for i in 0..n {
            for (c, e) in column.iter_mut().zip(&entries) {
                *c = e.per_instance.as_ref().expect("individual table")[i];
            }
            let row = shapley_from_table(&column, q)?;
            let r = efficiency_residual(contribution[i], column[0], &row);
            if r > worst {
                worst = r;
            }
            phi0_i.push(column[0]);
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
        pm,
        pm_raw: table.metric().raw_value(pm),
        phi0,
        shares: shares(pm, phi0, &phi),
        efficiency_residual: efficiency_residual(pm, phi0, &phi),
        phi,
        individual: individual_values,
        estimator: Estimator::Exact,
        diagnostics: Diagnostics {
            coalitions: table.evaluated(),
            predictions: table.predictions(),
            individual_efficiency_residual: individual_residual,
            ..Default::default()
        },
    })
}

/// Column means of the individual matrix.
pub fn average_individual<T: Scalar>(ind: &IndividualXper<T>) -> Vec<T> {
    let q = ind.phi.first().map_or(0, Vec::len);
    (0..q)
        .map(|j| compensated_mean(&ind.phi.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect()
}
