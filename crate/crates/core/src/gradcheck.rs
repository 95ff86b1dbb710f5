//! Central finite differences, used as an independent oracle for
//! [`crate::graph::Graph::backward`].

use crate::error::{CanError, Result};
use crate::tensor::Tensor;

/// `(f(x + ε·eᵢ) − f(x − ε·eᵢ)) / 2ε` for every coordinate of `x`.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor, eps: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if eps <= 0.0 || !eps.is_finite() {
        return Err(CanError::config(format!("finite-difference step {eps} must be positive")));
    }
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * eps);
    }
    Ok(grad)
}

/// Largest relative error between two gradients, with an absolute floor so
/// entries that are both near zero do not dominate.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor, floor: f64) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
