//! Scalar abstraction shared by every numeric module.
//!
//! All linear algebra is done over `Complex<T>` with `T` one of the IEEE
//! float types. Tolerances that depend on precision are derived from
//! `T::default_epsilon()` through the helpers below, so an `f32` build
//! degrades gracefully instead of failing every threshold check.

use std::fmt::Debug;

use nalgebra::{Complex, RealField};
use num_traits::ToPrimitive;

/// Real scalar type the numeric core is generic over (`f32` or `f64`).
pub trait Real: RealField + Copy + ToPrimitive + Debug + Send + Sync + 'static {}

impl Real for f32 {}
impl Real for f64 {}

/// Complex scalar over `T`.
pub type Cplx<T> = Complex<T>;

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_subset(&x)
}

/// Lossy conversion back to `f64` for reporting.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Singular-value floor (relative to the largest) below which a direction is
/// treated as absent when forming subspaces. `~1.5e-9` for `f64`.
pub fn subspace_tol<T: Real>() -> T {
    T::default_epsilon().sqrt() * lit(0.1)
}

/// Smallest eigenvalue kept in exact-rank mode: `1e-12` for `f64`.
pub fn exact_rank_floor<T: Real>() -> T {
    (T::default_epsilon() * lit(100.0)).max(lit(1e-12))
}

/// Threshold used to pick the first non-negligible entry of a vector for the
/// phase convention.
pub(crate) fn phase_pivot_tol<T: Real>() -> T {
    T::default_epsilon().sqrt()
}
