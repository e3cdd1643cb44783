//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All estimators are written against [`Scalar`], which is implemented for
//! `f32` and `f64`. Combinatorial weights are additionally generic over any
//! [`num_traits::Num`] so they can be evaluated exactly with rationals.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Infallible for the implemented types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum<T> {
    sum: T,
    compensation: T,
}

impl<T: Scalar> CompensatedSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            compensation: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.compensation
    }
}

pub fn compensated_sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Compensated arithmetic mean; zero for an empty input.
pub fn compensated_mean<T: Scalar>(values: &[T]) -> T {
    if values.is_empty() {
        return T::zero();
    }
    compensated_sum(values.iter().copied()) / T::from_count(values.len())
}

/// Standard normal density.
pub fn normal_pdf<T: Scalar>(z: T) -> T {
    let z = z.as_f64();
    T::lit((-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt())
}

/// Standard normal distribution function, accurate in both tails.
pub fn normal_cdf<T: Scalar>(z: T) -> T {
    T::lit(cdf_f64(z.as_f64()))
}

fn cdf_f64(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `ln Φ(z)`, finite for all finite `z`.
pub fn log_normal_cdf<T: Scalar>(z: T) -> T {
    let z = z.as_f64();
    let value = if z > -30.0 {
        cdf_f64(z).ln()
    } else {
        // Asymptotic expansion of the lower tail.
        let z2 = z * z;
        -0.5 * z2 - (-z).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    };
    T::lit(value)
}

/// Inverse Mills ratio `φ(z) / Φ(z)`.
pub fn mills_ratio<T: Scalar>(z: T) -> T {
    let z = z.as_f64();
    let value = if z > -30.0 {
        let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        pdf / cdf_f64(z)
    } else {
        let z2 = z * z;
        -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2))
    };
    T::lit(value)
}

/// Logistic sigmoid evaluated without overflow.
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Population-style (divide by `n`) mean and variance.
pub fn mean_and_variance<T: Scalar>(values: &[T]) -> (T, T) {
    let mean = compensated_mean(values);
    let var = compensated_mean(
        &values
            .iter()
            .map(|&v| (v - mean) * (v - mean))
            .collect::<Vec<_>>(),
    );
    (mean, var)
}

/// Population-style covariance of two equally long slices.
pub fn covariance<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let ma = compensated_mean(a);
    let mb = compensated_mean(b);
    compensated_mean(
        &a.iter()
            .zip(b)
            .map(|(&x, &y)| (x - ma) * (y - mb))
            .collect::<Vec<_>>(),
    )
}
