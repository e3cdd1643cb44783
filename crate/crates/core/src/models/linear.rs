//! Linear index models: least squares, probit and logit.

use serde::{Deserialize, Serialize};

use super::{check_width, Model, Prediction};
use crate::data::{EvalSample, Task};
use crate::error::{Result, XperError};
use crate::linalg::{Cholesky, NormalEquations, RankTolerance};
use crate::scalar::{log_normal_cdf, mills_ratio, normal_cdf, sigmoid, Scalar};

const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    Ols,
    Probit,
    Logit,
}

/// Optimiser trace kept alongside fitted likelihood models.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub iterations: usize,
    pub log_likelihood: Vec<f64>,
}

/// `score = intercept + x·coefficients`; probit and logit map the score
/// through the normal or logistic distribution function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel<T> {
    pub kind: LinearKind,
    pub intercept: Option<T>,
    pub coefficients: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<FitTrace>,
}

impl<T: Scalar> LinearModel<T> {
    pub fn new(kind: LinearKind, intercept: Option<T>, coefficients: Vec<T>) -> Self {
        Self {
            kind,
            intercept,
            coefficients,
            trace: None,
        }
    }

    #[inline]
    pub fn index(&self, row: &[T]) -> T {
        let mut s = self.intercept.unwrap_or_else(T::zero);
        for (&x, &b) in row.iter().zip(&self.coefficients) {
            s += x * b;
        }
        s
    }

    #[inline]
    fn predict_one(&self, row: &[T]) -> Prediction<T> {
        let eta = self.index(row);
        match self.kind {
            LinearKind::Ols => Prediction::score(eta),
            LinearKind::Probit => Prediction::probability(eta, normal_cdf(eta)),
            LinearKind::Logit => Prediction::probability(eta, sigmoid(eta)),
        }
    }
}

impl<T: Scalar> Model<T> for LinearModel<T> {
    fn task(&self) -> Task {
        match self.kind {
            LinearKind::Ols => Task::Regression,
            LinearKind::Probit | LinearKind::Logit => Task::BinaryClassification,
        }
    }

    fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    fn predict(&self, rows: &[T]) -> Result<Vec<Prediction<T>>> {
        check_width(rows, self.coefficients.len())?;
        Ok(rows
            .chunks_exact(self.coefficients.len())
            .map(|r| self.predict_one(r))
            .collect())
    }
}

/// Design rows in `f64`, with a leading one when an intercept is fitted.
struct Design {
    rows: Vec<f64>,
    dim: usize,
    names: Vec<String>,
}

impl Design {
    fn new<T: Scalar>(sample: &EvalSample<T>, intercept: bool) -> Self {
        let dim = sample.q() + usize::from(intercept);
        let mut rows = Vec::with_capacity(sample.n() * dim);
        for r in sample.rows() {
            if intercept {
                rows.push(1.0);
            }
            rows.extend(r.iter().map(|v| v.as_f64()));
        }
        let mut names = Vec::with_capacity(dim);
        if intercept {
            names.push("(intercept)".to_string());
        }
        names.extend(sample.feature_names().iter().cloned());
        Self { rows, dim, names }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    fn n(&self) -> usize {
        self.rows.len() / self.dim
    }

    fn factor(&self, gram: &[f64]) -> Result<Cholesky<f64>> {
        Cholesky::factor(gram, self.dim, RankTolerance::PerColumn(RANK_TOLERANCE)).map_err(|j| {
            XperError::SingularDesign {
                column: self.names[j].clone(),
            }
        })
    }

    fn check_rank(&self) -> Result<()> {
        let mut ne = NormalEquations::new(self.dim);
        for i in 0..self.n() {
            ne.add_row(self.row(i), 0.0, 1.0);
        }
        self.factor(&ne.gram).map(|_| ())
    }

    fn dot(&self, i: usize, beta: &[f64]) -> f64 {
        self.row(i).iter().zip(beta).map(|(x, b)| x * b).sum()
    }
}

fn split_coefficients<T: Scalar>(beta: &[f64], intercept: bool) -> (Option<T>, Vec<T>) {
    if intercept {
        (Some(T::lit(beta[0])), beta[1..].iter().map(|&b| T::lit(b)).collect())
    } else {
        (None, beta.iter().map(|&b| T::lit(b)).collect())
    }
}

/// Ordinary least squares via the normal equations, polished by iterative
/// refinement.
pub fn fit_ols<T: Scalar>(train: &EvalSample<T>, intercept: bool) -> Result<LinearModel<T>> {
    let design = Design::new(train, intercept);
    if train.n() <= design.dim {
        return Err(XperError::Domain(format!(
            "least squares needs more rows ({}) than parameters ({})",
            train.n(),
            design.dim
        )));
    }
    let y: Vec<f64> = train.target().iter().map(|v| v.as_f64()).collect();
    let mut ne = NormalEquations::new(design.dim);
    for (i, &yi) in y.iter().enumerate() {
        ne.add_row(design.row(i), yi, 1.0);
    }
    let chol = design.factor(&ne.gram)?;
    let mut beta = chol.solve(&ne.rhs);
    for _ in 0..2 {
        let mut g = vec![0.0; design.dim];
        for (i, &yi) in y.iter().enumerate() {
            let e = yi - design.dot(i, &beta);
            for (gk, xk) in g.iter_mut().zip(design.row(i)) {
                *gk += e * xk;
            }
        }
        let delta = chol.solve(&g);
        for (b, d) in beta.iter_mut().zip(delta) {
            *b += d;
        }
    }
    let (b0, coefficients) = split_coefficients(&beta, intercept);
    Ok(LinearModel::new(LinearKind::Ols, b0, coefficients))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlmOptions {
    pub intercept: bool,
    pub max_iter: usize,
    /// Convergence threshold on the max-norm of the score vector.
    pub tol: f64,
}

impl Default for GlmOptions {
    fn default() -> Self {
        Self {
            intercept: true,
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

/// Per-observation log-likelihood and its first two derivatives in the index.
trait Link {
    fn eval(y: f64, eta: f64) -> (f64, f64, f64);
}

struct ProbitLink;
struct LogitLink;

impl Link for ProbitLink {
    fn eval(y: f64, eta: f64) -> (f64, f64, f64) {
        let s = if y > 0.5 { 1.0 } else { -1.0 };
        let z = s * eta;
        let lambda: f64 = mills_ratio(z);
        (log_normal_cdf(z), s * lambda, -lambda * (lambda + z))
    }
}

impl Link for LogitLink {
    fn eval(y: f64, eta: f64) -> (f64, f64, f64) {
        let p: f64 = sigmoid(eta);
        let softplus = if eta > 0.0 {
            eta + (-eta).exp().ln_1p()
        } else {
            eta.exp().ln_1p()
        };
        (y * eta - softplus, y - p, -p * (1.0 - p))
    }
}

fn log_likelihood<L: Link>(design: &Design, y: &[f64], beta: &[f64]) -> f64 {
    (0..design.n())
        .map(|i| L::eval(y[i], design.dot(i, beta)).0)
        .sum()
}

fn fit_glm<T: Scalar, L: Link>(
    train: &EvalSample<T>,
    options: &GlmOptions,
    kind: LinearKind,
) -> Result<LinearModel<T>> {
    if train.task() != Task::BinaryClassification {
        return Err(XperError::Domain("binary response models need a 0/1 target".into()));
    }
    if !train.has_both_classes() {
        return Err(XperError::Domain(
            "the training target holds a single class".into(),
        ));
    }
    let design = Design::new(train, options.intercept);
    design.check_rank()?;
    let y: Vec<f64> = train.target().iter().map(|v| v.as_f64()).collect();
    let mut beta = vec![0.0; design.dim];
    let mut ll = log_likelihood::<L>(&design, &y, &beta);
    let mut trace = FitTrace {
        iterations: 0,
        log_likelihood: vec![ll],
    };
    let mut converged = false;
    for iter in 0..options.max_iter {
        let mut ne = NormalEquations::new(design.dim);
        let mut gradient = vec![0.0; design.dim];
        for (i, &yi) in y.iter().enumerate() {
            let (_, d1, d2) = L::eval(yi, design.dot(i, &beta));
            ne.add_row(design.row(i), 0.0, -d2);
            for (g, x) in gradient.iter_mut().zip(design.row(i)) {
                *g += d1 * x;
            }
        }
        let gmax = gradient.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        if gmax <= options.tol {
            converged = true;
            break;
        }
        let chol = match Cholesky::factor(&ne.gram, design.dim, RankTolerance::MaxDiagonal(1e-14)) {
            Ok(c) => c,
            Err(_) => break,
        };
        let step = chol.solve(&gradient);
        // Near the optimum the likelihood is flat to rounding error, so a
        // Newton step may not register as an increase.
        let slack = 1e-12 * (1.0 + ll.abs());
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let ll_new = log_likelihood::<L>(&design, &y, &candidate);
            if ll_new.is_finite() && ll_new >= ll - slack {
                beta = candidate;
                ll = ll_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        trace.iterations = iter + 1;
        trace.log_likelihood.push(ll);
        if !accepted {
            // No ascent left at machine precision: accept a near-stationary point.
            converged = gmax <= options.tol.max(1e-9 * train.n() as f64);
            break;
        }
    }
    if !converged {
        return Err(XperError::Separation(format!(
            "no convergence after {} iterations (log-likelihood {ll:.3e}); the classes are likely separable",
            trace.iterations
        )));
    }
    if ll > -1e-6 {
        return Err(XperError::Separation(format!(
            "log-likelihood {ll:.3e} is at its supremum; the classes are separable"
        )));
    }
    let (b0, coefficients) = split_coefficients(&beta, options.intercept);
    let mut model = LinearModel::new(kind, b0, coefficients);
    model.trace = Some(trace);
    Ok(model)
}

/// Probit maximum likelihood by Newton–Raphson with step halving.
pub fn fit_probit<T: Scalar>(train: &EvalSample<T>, options: &GlmOptions) -> Result<LinearModel<T>> {
    fit_glm::<T, ProbitLink>(train, options, LinearKind::Probit)
}

/// Logistic regression by Newton–Raphson (IRLS) with step halving.
pub fn fit_logit<T: Scalar>(train: &EvalSample<T>, options: &GlmOptions) -> Result<LinearModel<T>> {
    fit_glm::<T, LogitLink>(train, options, LinearKind::Logit)
}
