//! Small dense symmetric solves used by the least-squares fits.

use crate::scalar::Scalar;

/// How a vanishing Cholesky pivot is recognised.
#[derive(Clone, Copy, Debug)]
pub enum RankTolerance {
    /// Pivot `j` is rejected when it falls below `tol * A[j][j]`.
    PerColumn(f64),
    /// Pivot `j` is rejected when it falls below `tol * max_k A[k][k]`.
    MaxDiagonal(f64),
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    dim: usize,
    lower: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factors the row-major `dim x dim` matrix `a`.
    ///
    /// On failure returns the index of the first column whose pivot vanished,
    /// i.e. the first column that is (numerically) a combination of earlier ones.
    pub fn factor(a: &[T], dim: usize, tolerance: RankTolerance) -> Result<Self, usize> {
        assert_eq!(a.len(), dim * dim, "matrix shape mismatch");
        let max_diag = (0..dim)
            .map(|j| a[j * dim + j])
            .fold(T::zero(), |m, d| if d > m { d } else { m });
        let mut lower = vec![T::zero(); dim * dim];
        for j in 0..dim {
            let mut d = a[j * dim + j];
            for k in 0..j {
                d -= lower[j * dim + k] * lower[j * dim + k];
            }
            let threshold = match tolerance {
                RankTolerance::PerColumn(tol) => T::lit(tol) * a[j * dim + j],
                RankTolerance::MaxDiagonal(tol) => T::lit(tol) * max_diag,
            };
            if !(d > threshold) || !(d > T::zero()) {
                return Err(j);
            }
            let pivot = d.sqrt();
            lower[j * dim + j] = pivot;
            for i in (j + 1)..dim {
                let mut s = a[i * dim + j];
                for k in 0..j {
                    s -= lower[i * dim + k] * lower[j * dim + k];
                }
                lower[i * dim + j] = s / pivot;
            }
        }
        Ok(Self { dim, lower })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim;
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.lower[i * n + k] * y[k];
            }
            y[i] = s / self.lower[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.lower[k * n + i] * y[k];
            }
            y[i] = s / self.lower[i * n + i];
        }
        y
    }
}

/// Accumulates `Xᵀ W X` and `Xᵀ W y` one design row at a time.
#[derive(Clone, Debug)]
pub struct NormalEquations<T> {
    dim: usize,
    pub gram: Vec<T>,
    pub rhs: Vec<T>,
}

impl<T: Scalar> NormalEquations<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            gram: vec![T::zero(); dim * dim],
            rhs: vec![T::zero(); dim],
        }
    }

    pub fn add_row(&mut self, row: &[T], target: T, weight: T) {
        debug_assert_eq!(row.len(), self.dim);
        for i in 0..self.dim {
            let wi = weight * row[i];
            if wi == T::zero() {
                continue;
            }
            self.rhs[i] += wi * target;
            for j in 0..self.dim {
                self.gram[i * self.dim + j] += wi * row[j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let chol = Cholesky::factor(&a, 2, RankTolerance::PerColumn(1e-12)).unwrap();
        let x = chol.solve(&[2.0, 1.0]);
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0_f64).abs() < 1e-14);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0_f64).abs() < 1e-14);
    }

    #[test]
    fn reports_first_dependent_column() {
        // third column = first + second
        let rows = [[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 2.0], [2.0, 1.0, 3.0]];
        let mut ne = NormalEquations::new(3);
        for r in &rows {
            ne.add_row(r, 0.0_f64, 1.0);
        }
        let err = Cholesky::factor(&ne.gram, 3, RankTolerance::PerColumn(1e-10)).unwrap_err();
        assert_eq!(err, 2);
    }
}
