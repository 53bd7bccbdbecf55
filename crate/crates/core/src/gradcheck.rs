//! Central finite-difference gradients for validating analytic derivatives.
//!
//! The checker only ever evaluates the scalar function, never the gradient
//! under test, so it stays independent of the code path it validates.

use ndarray::{Array1, ArrayView1};

/// Central-difference gradient of `f` at `x` with coordinate-wise step `h`.
pub fn central_difference<F>(f: F, x: ArrayView1<'_, f64>, h: f64) -> Array1<f64>
where
    F: Fn(ArrayView1<'_, f64>) -> f64,
{
    let mut grad = Array1::zeros(x.len());
    let mut probe = x.to_owned();
    for j in 0..x.len() {
        let orig = probe[j];
        probe[j] = orig + h;
        let hi = f(probe.view());
        probe[j] = orig - h;
        let lo = f(probe.view());
        probe[j] = orig;
        grad[j] = (hi - lo) / (2.0 * h);
    }
    grad
}

/// Maximum relative deviation between `analytic` and the central-difference
/// gradient of `f`, normalized by `1 + |analytic_j|` per coordinate.
pub fn max_relative_error<F>(f: F, x: ArrayView1<'_, f64>, analytic: ArrayView1<'_, f64>, h: f64) -> f64
where
    F: Fn(ArrayView1<'_, f64>) -> f64,
{
    let numeric = central_difference(f, x, h);
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / (1.0 + a.abs()))
        .fold(0.0, f64::max)
}
