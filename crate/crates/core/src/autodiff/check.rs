//! Central finite differences, the independent oracle for every analytic
//! gradient in the crate.

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Central-difference estimate `(f(θ + h·e_j) − f(θ − h·e_j)) / 2h` for every
/// coordinate `j`.
pub fn finite_difference_gradient<T, F>(mut f: F, theta: &[T], step: T) -> Result<Vec<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    try_finite_difference_gradient(|x| Ok(f(x)), theta, step)
}

/// Fallible variant of [`finite_difference_gradient`].
pub fn try_finite_difference_gradient<T, F>(mut f: F, theta: &[T], step: T) -> Result<Vec<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<T>,
{
    if !(step > T::zero()) {
        return Err(Error::invalid(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let mut probe = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        let base = probe[j];
        probe[j] = base + step;
        let plus = f(&probe)?;
        probe[j] = base - step;
        let minus = f(&probe)?;
        probe[j] = base;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFiniteEvaluation { coordinate: j });
        }
        grad.push((plus - minus) / (lit::<T>(2.0) * step));
    }
    Ok(grad)
}

/// Largest `|a − n| / max(|a|, |n|, floor)` over paired entries.
///
/// `floor` keeps coordinates whose true gradient is zero from dividing
/// finite-difference noise by zero.
pub fn max_relative_error<T: Scalar>(analytic: &[T], numeric: &[T], floor: T) -> T {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(T::zero(), T::max)
}
