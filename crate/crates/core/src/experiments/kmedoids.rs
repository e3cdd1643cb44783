use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Result, XperError};
use crate::rng::seeded;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSpace {
    /// Rows of the individual-XPER matrix.
    Xper,
    /// Standardized feature columns.
    #[default]
    Features,
}

impl std::str::FromStr for ClusterSpace {
    type Err = XperError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xper" => Ok(ClusterSpace::Xper),
            "features" => Ok(ClusterSpace::Features),
            other => Err(XperError::Config(format!("unknown cluster space `{other}`"))),
        }
    }
}

/// k-medoids partition under Euclidean distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub space: ClusterSpace,
    pub k: usize,
    pub medoids: Vec<Vec<f64>>,
    /// Row index of each medoid in the fitted point set.
    pub medoid_indices: Vec<usize>,
    pub assignment: Vec<usize>,
    /// Sum of distances to the assigned medoid.
    pub objective: f64,
    /// Objective after the build phase and after every accepted swap.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Index of the nearest point in `centres`; ties go to the lower index.
pub(crate) fn nearest(point: &[f64], centres: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centres.iter().enumerate() {
        let d = distance(point, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

impl ClusterModel {
    pub fn with_space(mut self, space: ClusterSpace) -> Self {
        self.space = space;
        self
    }

    /// Nearest medoid of `point`.
    pub fn assign(&self, point: &[f64]) -> usize {
        nearest(point, &self.medoids)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Partitioning around medoids: greedy build, then best-improvement swaps
/// until no swap lowers the objective or `max_iter` swaps have been made.
///
/// The seed orders the candidates, which only matters for exact ties.
pub fn fit_kmedoids(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<ClusterModel> {
    let m = points.len();
    if k == 0 || k > m {
        return Err(XperError::Range(format!("k = {k} clusters for {m} points")));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(XperError::Contract("points differ in dimension".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(XperError::Domain("points must be finite".into()));
    }
    let mut dist = vec![0.0; m * m];
    for a in 0..m {
        for b in (a + 1)..m {
            let v = distance(&points[a], &points[b]);
            dist[a * m + b] = v;
            dist[b * m + a] = v;
        }
    }
    let at = |i: usize, c: usize| dist[i * m + c];
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut seeded(seed));

    // Build.
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let mut is_medoid = vec![false; m];
    let mut near = vec![f64::INFINITY; m];
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for &c in order.iter().filter(|&&c| !is_medoid[c]) {
            let cost: f64 = (0..m).map(|i| near[i].min(at(i, c))).sum();
            if best.is_none_or(|(_, b)| cost < b) {
                best = Some((c, cost));
            }
        }
        let (c, _) = best.expect("k <= m leaves a candidate");
        medoids.push(c);
        is_medoid[c] = true;
        for (i, n) in near.iter_mut().enumerate() {
            *n = n.min(at(i, c));
        }
    }

    let assign_all = |medoids: &[usize]| -> (Vec<usize>, Vec<f64>, Vec<f64>) {
        let mut slot = vec![0; m];
        let mut first = vec![f64::INFINITY; m];
        let mut second = vec![f64::INFINITY; m];
        for i in 0..m {
            for (s, &c) in medoids.iter().enumerate() {
                let v = at(i, c);
                if v < first[i] {
                    second[i] = first[i];
                    first[i] = v;
                    slot[i] = s;
                } else if v < second[i] {
                    second[i] = v;
                }
            }
        }
        (slot, first, second)
    };

    let (mut slot, mut first, mut second) = assign_all(&medoids);
    let mut objective: f64 = first.iter().sum();
    let mut trace = vec![objective];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut best: Option<(usize, usize, f64)> = None;
        for s in 0..k {
            for &o in order.iter().filter(|&&o| !is_medoid[o]) {
                let mut delta = 0.0;
                for i in 0..m {
                    let to_o = at(i, o);
                    let replaced = if slot[i] == s { to_o.min(second[i]) } else { to_o.min(first[i]) };
                    delta += replaced - first[i];
                }
                if best.is_none_or(|(_, _, b)| delta < b) {
                    best = Some((s, o, delta));
                }
            }
        }
        match best {
            Some((s, o, delta)) if delta < -1e-12 * (1.0 + objective) => {
                is_medoid[medoids[s]] = false;
                is_medoid[o] = true;
                medoids[s] = o;
                (slot, first, second) = assign_all(&medoids);
                objective = first.iter().sum();
                trace.push(objective);
                iterations += 1;
            }
            _ => {
                converged = true;
                break;
            }
        }
    }
    Ok(ClusterModel {
        space: ClusterSpace::default(),
        k,
        medoids: medoids.iter().map(|&c| points[c].clone()).collect(),
        medoid_indices: medoids,
        assignment: slot,
        objective,
        objective_trace: trace,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_medoid_minimises_total_distance() {
        let pts: Vec<Vec<f64>> = [0.0, 1.0, 2.0, 3.0, 10.0].iter().map(|&x| vec![x]).collect();
        let c = fit_kmedoids(&pts, 1, 0, 10).unwrap();
        let totals: Vec<f64> = pts.iter().map(|p| pts.iter().map(|r| distance(p, r)).sum()).collect();
        let best = totals.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(c.objective, best);
        assert_eq!(c.medoid_indices, vec![2]);
    }

    #[test]
    fn k_equal_to_m_is_zero_cost() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let c = fit_kmedoids(&pts, 5, 3, 10).unwrap();
        assert_eq!(c.objective, 0.0);
        let mut idx = c.medoid_indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
        assert!(fit_kmedoids(&pts, 6, 3, 10).is_err());
        assert!(fit_kmedoids(&pts, 0, 3, 10).is_err());
    }

    #[test]
    fn objective_never_increases() {
        let pts: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let t = i as f64 * 0.37;
                vec![t.sin() * (1.0 + i as f64 % 3.0), t.cos()]
            })
            .collect();
        let c = fit_kmedoids(&pts, 4, 9, 100).unwrap();
        assert!(c.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(c.converged);
        assert_eq!(c, fit_kmedoids(&pts, 4, 9, 100).unwrap());
    }
}
