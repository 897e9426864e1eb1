//! Unconstrained minimization: L-BFGS with a strong-Wolfe line search, the
//! Huber error function and a central-difference gradient checker.

mod gradcheck;
mod lbfgs;
mod line_search;

use serde::{Deserialize, Serialize};

pub use gradcheck::{central_difference, grad_check};
pub use lbfgs::minimize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptError {
    #[error("non-finite {what} at x = {point:?}")]
    NonFinite { what: &'static str, point: Vec<f64> },
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// A differentiable scalar function of a vector.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], grad: &mut [f64]);

    /// Writes the gradient into `grad` and returns the value.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.gradient(x, grad);
        self.value(x)
    }
}

/// Adapts a pair of closures to [`Objective`].
pub struct FnObjective<F, G> {
    pub f: F,
    pub g: G,
}

impl<F, G> FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    pub fn new(f: F, g: G) -> Self {
        FnObjective { f, g }
    }
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.copy_from_slice(&(self.g)(x));
    }
}

/// Strong-Wolfe constants: sufficient decrease `c1`, curvature `c2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WolfeParams {
    pub c1: f64,
    pub c2: f64,
}

impl Default for WolfeParams {
    fn default() -> Self {
        WolfeParams { c1: 1e-4, c2: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    /// Number of `(s, y)` correction pairs kept.
    pub memory_pairs: usize,
    /// Stop when the Euclidean gradient norm falls to this value.
    pub grad_tol: f64,
    pub max_iters: usize,
    pub line_search: WolfeParams,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            memory_pairs: 10,
            grad_tol: 1e-8,
            max_iters: 1000,
            line_search: WolfeParams::default(),
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<(), OptError> {
        let WolfeParams { c1, c2 } = self.line_search;
        if !(0.0 < c1 && c1 < c2 && c2 < 1.0) {
            return Err(OptError::InvalidConfig(format!(
                "need 0 < c1 < c2 < 1, got c1 = {c1}, c2 = {c2}"
            )));
        }
        if self.memory_pairs == 0 {
            return Err(OptError::InvalidConfig("memory_pairs must be >= 1".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(OptError::InvalidConfig(format!(
                "grad_tol must be > 0, got {}",
                self.grad_tol
            )));
        }
        Ok(())
    }
}

/// Why the minimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    /// No step along the search direction decreased the objective.
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub x_min: Vec<f64>,
    pub f_min: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// True only when `grad_norm <= grad_tol`.
    pub converged: bool,
    pub termination: Termination,
}

/// Huber error: `r²/2` for `|r| <= delta`, `delta·(|r| − delta/2)` beyond.
#[inline]
pub fn huber(residual: f64, delta: f64) -> f64 {
    let a = residual.abs();
    if a <= delta {
        0.5 * residual * residual
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Derivative of [`huber`] in the residual. At `|r| = delta` the linear branch
/// is used; both branches agree there.
#[inline]
pub fn huber_derivative(residual: f64, delta: f64) -> f64 {
    if residual.abs() < delta {
        residual
    } else {
        delta * residual.signum()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
