//! Compute-optimal allocation under `C = 6ND`.
//!
//! Minimizing `E + A/N^α + B/D^β` subject to `6ND = C` gives
//!
//! ```text
//! N_opt(C) = G·(C/6)^a,   D_opt(C) = (C/6)^b / G,
//! G = (αA / (βB))^(1/(α+β)),   a = β/(α+β),   b = α/(α+β).
//! ```
//!
//! The inverse queries here search over `ln C` or `ln N`; every such search
//! stops at a fixed relative tolerance of [`SEARCH_REL_TOL`].

use serde::{Deserialize, Serialize};

use crate::lawfit::{predict_loss, ChinchillaParams};

/// Relative bracket width at which the bisection and golden-section searches stop.
pub const SEARCH_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AllocError {
    #[error("target loss {target} is unreachable: the law's irreducible loss is E = {e}")]
    UnreachableTarget { target: f64, e: f64 },
    #[error("compute must be finite and > 0, got {0}")]
    InvalidCompute(f64),
    #[error("closed-form N_opt = {closed_form:e} disagrees with numeric {numeric:e} (relative {relative:e} > {tolerance:e})")]
    Mismatch {
        closed_form: f64,
        numeric: f64,
        relative: f64,
        tolerance: f64,
    },
    #[error("search did not bracket a solution for target loss {0}")]
    NoBracket(f64),
}

pub type Result<T> = std::result::Result<T, AllocError>;

/// `G`, and the exponents `a` of `N_opt ∝ C^a` and `b` of `D_opt ∝ C^b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationConstants {
    pub g: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub compute: f64,
    pub n_opt: f64,
    pub d_opt: f64,
    pub predicted_loss: f64,
}

impl AllocationResult {
    /// `|6·N_opt·D_opt / C − 1|`.
    pub fn constraint_error(&self) -> f64 {
        (6.0 * self.n_opt * self.d_opt / self.compute - 1.0).abs()
    }
}

pub fn allocation_constants(params: &ChinchillaParams) -> AllocationConstants {
    let sum = params.alpha + params.beta;
    let g = (params.alpha * params.a / (params.beta * params.b)).powf(1.0 / sum);
    let a = params.beta / sum;
    AllocationConstants { g, a, b: 1.0 - a }
}

/// Loss-minimizing `(N, D)` with `6ND = compute`.
pub fn optimal_allocation(params: &ChinchillaParams, compute: f64) -> AllocationResult {
    let k = allocation_constants(params);
    let half = compute / 6.0;
    let n_opt = k.g * half.powf(k.a);
    let d_opt = half.powf(k.b) / k.g;
    AllocationResult {
        compute,
        n_opt,
        d_opt,
        predicted_loss: predict_loss(params, n_opt, d_opt),
    }
}

/// Model size that is compute-optimal for `u_d` tokens: `G·(G·U_D)^(a/b)`.
pub fn optimal_params_for_tokens(params: &ChinchillaParams, u_d: f64) -> f64 {
    let k = allocation_constants(params);
    k.g * (k.g * u_d).powf(k.a / k.b)
}

/// Compute at which the optimal allocation trains on `u_d` tokens.
pub fn compute_for_tokens(params: &ChinchillaParams, u_d: f64) -> f64 {
    let k = allocation_constants(params);
    6.0 * (k.g * u_d).powf(1.0 / k.b)
}

/// Smallest compute whose optimal allocation reaches `target_loss`, by
/// bisection on `ln C`. The returned value is the upper end of a bracket of
/// relative width [`SEARCH_REL_TOL`].
pub fn compute_for_loss(params: &ChinchillaParams, target_loss: f64) -> Result<f64> {
    if !(target_loss > params.e) {
        return Err(AllocError::UnreachableTarget {
            target: target_loss,
            e: params.e,
        });
    }
    let loss_at = |ln_c: f64| optimal_allocation(params, ln_c.exp()).predicted_loss;
    let (mut lo, mut hi) = (0.0_f64, 10.0_f64 * std::f64::consts::LN_10);
    while loss_at(lo) <= target_loss {
        lo -= 10.0;
        if lo < -700.0 {
            return Ok(lo.exp());
        }
    }
    while loss_at(hi) > target_loss {
        lo = hi;
        hi += 10.0;
        if hi > 700.0 {
            return Err(AllocError::NoBracket(target_loss));
        }
    }
    let tol = SEARCH_REL_TOL.ln_1p();
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if loss_at(mid) <= target_loss {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi.exp())
}

/// Closed-form vs numeric optimum at one budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationCheck {
    pub compute: f64,
    pub n_closed_form: f64,
    pub n_numeric: f64,
    pub relative_error: f64,
}

/// Minimizes `L(N, C/(6N))` over `ln N` by golden-section search and compares
/// the minimizer with the closed form.
pub fn verify_allocation(params: &ChinchillaParams, compute: f64, tolerance: f64) -> Result<AllocationCheck> {
    if !(compute.is_finite() && compute > 0.0) {
        return Err(AllocError::InvalidCompute(compute));
    }
    let half = compute / 6.0;
    let loss = |ln_n: f64| {
        let n = ln_n.exp();
        predict_loss(params, n, half / n)
    };
    // N and D both at least one.
    let n_numeric = golden_section(loss, 0.0, half.ln().max(1e-12), SEARCH_REL_TOL.ln_1p()).exp();
    let n_closed_form = optimal_allocation(params, compute).n_opt;
    let relative_error = (n_numeric / n_closed_form - 1.0).abs();
    if relative_error > tolerance {
        return Err(AllocError::Mismatch {
            closed_form: n_closed_form,
            numeric: n_numeric,
            relative: relative_error,
            tolerance,
        });
    }
    Ok(AllocationCheck {
        compute,
        n_closed_form,
        n_numeric,
        relative_error,
    })
}

/// Minimizer of a unimodal `f` on `[lo, hi]`, to bracket width `tol`.
fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}
