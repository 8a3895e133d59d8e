//! Gaussian-process residual model with a UCB correction term.
//!
//! The GP is fit on (action, reward residual) pairs gathered across attempts
//! and predicts how much the simulator's reward deviates from the skill-model
//! rollout at a candidate action. Rollout values are corrected optimistically:
//! `rv + mean + sqrt(beta) * std`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result};

/// Default exploration weight for the UCB correction.
pub const DEFAULT_BETA: f64 = 0.25;

/// Slack tolerated when checking that actions lie in the unit cube.
const CUBE_SLACK: f64 = 1e-9;

/// Squared-exponential kernel over unit-cube-normalized actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GPKernel {
    /// Shared lengthscale across action dimensions.
    pub lengthscale: f64,
    /// Prior variance of the residual signal.
    pub signal_variance: f64,
    /// Observation noise variance added to the kernel diagonal.
    pub noise_variance: f64,
}

impl Default for GPKernel {
    fn default() -> GPKernel {
        GPKernel { lengthscale: 0.2, signal_variance: 1.0, noise_variance: 1e-4 }
    }
}

impl GPKernel {
    /// Kernel value between two equal-length action vectors.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_variance * (-d2 / (2.0 * self.lengthscale * self.lengthscale)).exp()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(Error::Config(format!("GP lengthscale must be positive, got {}", self.lengthscale)));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(Error::Config(format!(
                "GP signal variance must be positive, got {}",
                self.signal_variance
            )));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::Config(format!(
                "GP noise variance must be nonnegative, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }
}

/// Posterior over reward residuals, cached as a Cholesky factorization.
///
/// An empty model (no observations) has prior mean 0 and prior standard
/// deviation `sqrt(signal_variance)` everywhere.
#[derive(Debug, Clone)]
pub struct GPModel {
    kernel: GPKernel,
    beta: f64,
    actions: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    factor: Option<Cholesky<f64, Dyn>>,
    /// `(K + noise * I)^-1 residuals`, empty when there are no observations.
    weights: DVector<f64>,
}

impl Default for GPModel {
    fn default() -> GPModel {
        GPModel::empty(GPKernel::default(), DEFAULT_BETA)
    }
}

impl GPModel {
    /// Model with no observations.
    pub fn empty(kernel: GPKernel, beta: f64) -> GPModel {
        GPModel {
            kernel,
            beta,
            actions: Vec::new(),
            residuals: Vec::new(),
            factor: None,
            weights: DVector::zeros(0),
        }
    }

    pub fn kernel(&self) -> &GPKernel {
        &self.kernel
    }

    /// Exploration weight used by [`ucb_correct`].
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Observations the posterior is conditioned on.
    pub fn data(&self) -> (&[Vec<f64>], &[f64]) {
        (&self.actions, &self.residuals)
    }

    /// Action dimension the model was fit on; `None` when empty.
    pub fn dim(&self) -> Option<usize> {
        self.actions.first().map(Vec::len)
    }
}

fn check_unit_cube(action: &[f64]) -> Result<()> {
    for (i, &x) in action.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("action component {i} is {x}")));
        }
        if !(-CUBE_SLACK..=1.0 + CUBE_SLACK).contains(&x) {
            return Err(Error::Config(format!(
                "action component {i} = {x} outside the unit cube; normalize actions before fitting"
            )));
        }
    }
    Ok(())
}

/// Fits the posterior on the given observations, replacing any previous data.
///
/// Actions must be normalized to the unit cube and share one dimension;
/// residuals must be finite. The kernel matrix `K + noise * I` is factorized
/// once here so that [`gp_posterior`] is a pair of triangular solves.
pub fn gp_fit(model: &GPModel, actions: Vec<Vec<f64>>, residuals: Vec<f64>) -> Result<GPModel> {
    model.kernel.validate()?;
    if actions.len() != residuals.len() {
        return Err(Error::Shape(format!(
            "{} actions but {} residuals",
            actions.len(),
            residuals.len()
        )));
    }
    if let Some(first) = actions.first() {
        let dim = first.len();
        if dim == 0 {
            return Err(Error::Shape("actions must have at least one component".into()));
        }
        for a in &actions {
            if a.len() != dim {
                return Err(Error::Shape(format!(
                    "inconsistent action dimensions: {} vs {}",
                    a.len(),
                    dim
                )));
            }
            check_unit_cube(a)?;
        }
    }
    for (i, &r) in residuals.iter().enumerate() {
        if !r.is_finite() {
            return Err(Error::NonFinite(format!("residual {i} is {r}")));
        }
    }

    let n = actions.len();
    if n == 0 {
        return Ok(GPModel { kernel: model.kernel, beta: model.beta, ..GPModel::empty(model.kernel, model.beta) });
    }

    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let k = model.kernel.eval(&actions[i], &actions[j]);
            gram[(i, j)] = k;
            gram[(j, i)] = k;
        }
        gram[(i, i)] += model.kernel.noise_variance;
    }
    let factor = Cholesky::new(gram).ok_or_else(|| {
        Error::Config("GP kernel matrix is not positive definite; increase noise_variance".into())
    })?;
    let weights = factor.solve(&DVector::from_column_slice(&residuals));

    Ok(GPModel {
        kernel: model.kernel,
        beta: model.beta,
        actions,
        residuals,
        factor: Some(factor),
        weights,
    })
}

/// Posterior mean and standard deviation of the residual at `action`.
///
/// The returned variance is the latent one (no observation noise added).
/// An empty model returns the prior `(0, sqrt(signal_variance))`.
pub fn gp_posterior(model: &GPModel, action: &[f64]) -> Result<(f64, f64)> {
    check_unit_cube(action)?;
    let Some(factor) = &model.factor else {
        return Ok((0.0, model.kernel.signal_variance.sqrt()));
    };
    let dim = model.actions[0].len();
    if action.len() != dim {
        return Err(Error::Shape(format!(
            "query has {} components but the model was fit on {dim}",
            action.len()
        )));
    }

    let kstar = DVector::from_iterator(
        model.actions.len(),
        model.actions.iter().map(|a| model.kernel.eval(a, action)),
    );
    let mean = kstar.dot(&model.weights);
    let solved = factor.solve(&kstar);
    let variance = (model.kernel.signal_variance - kstar.dot(&solved)).max(0.0);
    Ok((mean, variance.sqrt()))
}

/// Optimistic correction of a rollout value: `rv + mean + sqrt(beta) * std`.
///
/// With `beta = 0` and an empty model the correction is exactly zero.
pub fn ucb_correct(model: &GPModel, action: &[f64], rollout_value: f64) -> Result<f64> {
    let (mean, std) = gp_posterior(model, action)?;
    Ok(rollout_value + mean + model.beta.sqrt() * std)
}
