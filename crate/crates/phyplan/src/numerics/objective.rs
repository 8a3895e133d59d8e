//! Scalar objectives over flat parameter vectors.

use crate::{Error, Result};

/// A scalar function of a flat parameter vector, with its analytic gradient.
///
/// Implementations must return a gradient of the same length as `params`.
pub trait Objective: Sync {
    /// Returns the objective value and its gradient at `params`.
    fn evaluate(&self, params: &[f64]) -> (f64, Vec<f64>);
}

/// Wraps a closure `params -> (value, gradient)` as an [`Objective`].
pub struct FnObjective<F>(pub F);

impl<F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync> Objective for FnObjective<F> {
    fn evaluate(&self, params: &[f64]) -> (f64, Vec<f64>) {
        (self.0)(params)
    }
}

/// Evaluates `objective` at `params`, rejecting non-finite values.
pub fn gradient<O: Objective + ?Sized>(objective: &O, params: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (loss, grad) = objective.evaluate(params);
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("objective value {loss}")));
    }
    if let Some(g) = grad.iter().find(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient component {g}")));
    }
    Ok((loss, grad))
}
