//! Parametric loss laws and their fitting.
//!
//! Single-epoch law: `L(N, D) = E + A/N^α + B/D^β`.
//!
//! Multi-epoch law: the same surface evaluated at effective parameters `N'`
//! and tokens `D'`, where repeated tokens and excess parameters decay
//! exponentially in value:
//!
//! ```text
//! D' = U_D + U_D·R*_D·(1 − exp(−R_D / R*_D)),   R_D = D/U_D − 1
//! N' = U_N + U_N·R*_N·(1 − exp(−R_N / R*_N)),   R_N = N/U_N − 1
//! ```
//!
//! `U_N` is the compute-optimal model size for `U_D` unique tokens.
//!
//! Fitting is two-stage. Stage one fits `(E, A, B, α, β)` on single-epoch
//! runs; stage two holds those fixed and fits `(R*_N, R*_D)` on multi-epoch
//! runs. Both minimize `Σ huber_δ(log L̂ − log L)` with L-BFGS from every
//! point of a Cartesian initialization grid and keep the best result.

mod fit;
mod objective;

use serde::{Deserialize, Serialize};

use crate::numopt::{OptConfig, OptError};

pub use fit::{fit_multi_epoch, fit_single_epoch, multi_epoch_runs, single_epoch_runs};
pub use objective::{MultiEpochObjective, SingleEpochObjective};

/// Runs with at most this many repetitions count as single-epoch.
pub const SINGLE_EPOCH_MAX_REPETITIONS: f64 = 0.01;

/// Default Huber threshold on log-loss residuals.
pub const DEFAULT_HUBER_DELTA: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LawFitError {
    #[error("need at least {needed} {what} runs, got {got}")]
    TooFewRuns {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("degenerate run span: {0}")]
    DegenerateSpan(String),
    #[error("all {0} initializations failed")]
    AllStartsFailed(usize),
    #[error("no multi-epoch runs (repetitions > {SINGLE_EPOCH_MAX_REPETITIONS})")]
    NoMultiEpochRuns,
    #[error("invalid law parameters: {0}")]
    InvalidParams(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid fit config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Opt(#[from] OptError),
}

pub type Result<T> = std::result::Result<T, LawFitError>;

/// Constants of the single-epoch law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChinchillaParams {
    /// Irreducible loss in nats.
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ChinchillaParams {
    pub const fn new(e: f64, a: f64, b: f64, alpha: f64, beta: f64) -> Self {
        ChinchillaParams { e, a, b, alpha, beta }
    }

    /// Speech language models on HuBERT units.
    pub const SPEECH: ChinchillaParams = ChinchillaParams::new(1.73, 13.9, 39.8, 0.25, 0.24);
    /// Text language models.
    pub const TEXT: ChinchillaParams = ChinchillaParams::new(1.87, 521.0, 1488.0, 0.35, 0.35);
    /// Speech units compressed with a unigram tokenizer.
    pub const SPEECH_UNIGRAM: ChinchillaParams = ChinchillaParams::new(1.42, 3.85, 8.90, 0.15, 0.16);

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.e) || !ok(self.a) || !ok(self.b) {
            return Err(LawFitError::InvalidParams(format!(
                "E, A, B must be positive, got E={}, A={}, B={}",
                self.e, self.a, self.b
            )));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(ok(v) && v < 2.0) {
                return Err(LawFitError::InvalidParams(format!("{name} = {v} outside (0, 2)")));
            }
        }
        Ok(())
    }

    /// Log-space coordinates `(ln E, ln A, ln B, α, β)` used by the fit.
    pub fn to_transformed(&self) -> [f64; 5] {
        [self.e.ln(), self.a.ln(), self.b.ln(), self.alpha, self.beta]
    }

    pub fn from_transformed(x: &[f64]) -> Self {
        ChinchillaParams::new(x[0].exp(), x[1].exp(), x[2].exp(), x[3], x[4])
    }
}

/// Constants of the multi-epoch law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiEpochParams {
    pub base: ChinchillaParams,
    pub r_star_n: f64,
    pub r_star_d: f64,
}

impl MultiEpochParams {
    pub const SPEECH: MultiEpochParams = MultiEpochParams {
        base: ChinchillaParams::SPEECH,
        r_star_n: 31.0,
        r_star_d: 25.0,
    };
    pub const TEXT: MultiEpochParams = MultiEpochParams {
        base: ChinchillaParams::TEXT,
        r_star_n: 5.31,
        r_star_d: 15.4,
    };

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        for (name, v) in [("r_star_n", self.r_star_n), ("r_star_d", self.r_star_d)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(LawFitError::InvalidParams(format!("{name} = {v} must be > 0")));
            }
        }
        Ok(())
    }
}

/// `E + A/N^α + B/D^β`.
pub fn predict_loss(params: &ChinchillaParams, n: f64, d: f64) -> f64 {
    params.e + params.a / n.powf(params.alpha) + params.b / d.powf(params.beta)
}

/// `U·(1 + R*·(1 − exp(−R/R*)))` with `R = total/unique − 1`. Non-positive `R`
/// (an undersized model) returns `total` unchanged.
pub fn effective_quantity(total: f64, unique: f64, r_star: f64) -> f64 {
    let r = total / unique - 1.0;
    if r <= 0.0 {
        total
    } else {
        // Factored so every rounding step is monotone: the result never
        // exceeds `unique · (1 + r_star)` as computed in floating point.
        unique * (1.0 + r_star * -(-r / r_star).exp_m1())
    }
}

/// Effective `(N', D')` for a run of `n` parameters trained on `d` tokens of
/// which `u_d` are unique; `u_n` is the compute-optimal size for `u_d`.
pub fn effective_budget(params: &MultiEpochParams, n: f64, d: f64, u_d: f64, u_n: f64) -> Result<(f64, f64)> {
    for (name, v) in [("n", n), ("d", d), ("u_d", u_d), ("u_n", u_n)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(LawFitError::InvalidInput(format!("{name} = {v} must be > 0")));
        }
    }
    if u_d > d {
        return Err(LawFitError::InvalidInput(format!(
            "unique tokens {u_d} exceed total tokens {d}"
        )));
    }
    Ok((
        effective_quantity(n, u_n, params.r_star_n),
        effective_quantity(d, u_d, params.r_star_d),
    ))
}

/// The single-epoch law evaluated at the effective budget.
pub fn predict_loss_multi(params: &MultiEpochParams, n: f64, d: f64, u_d: f64, u_n: f64) -> Result<f64> {
    let (n_eff, d_eff) = effective_budget(params, n, d, u_d, u_n)?;
    Ok(predict_loss(&params.base, n_eff, d_eff))
}

/// Cartesian grid of starting points in `(ln E, ln A, ln B, α, β)`.
/// Flat index order: `ln E` outermost, `β` innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitGrid {
    pub log_e: Vec<f64>,
    pub log_a: Vec<f64>,
    pub log_b: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Default for InitGrid {
    fn default() -> Self {
        InitGrid {
            log_e: vec![-0.5, 0.0, 0.5, 1.0],
            log_a: vec![1.0, 3.0, 5.0, 7.0],
            log_b: vec![1.0, 3.0, 5.0, 7.0],
            alpha: vec![0.1, 0.3, 0.5, 0.7, 1.0],
            beta: vec![0.1, 0.3, 0.5, 0.7, 1.0],
        }
    }
}

impl InitGrid {
    fn axes(&self) -> [&[f64]; 5] {
        [&self.log_e, &self.log_a, &self.log_b, &self.alpha, &self.beta]
    }

    pub fn len(&self) -> usize {
        self.axes().iter().map(|a| a.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, index: usize) -> [f64; 5] {
        let axes = self.axes();
        let mut out = [0.0; 5];
        let mut rem = index;
        for k in (0..5).rev() {
            out[k] = axes[k][rem % axes[k].len()];
            rem /= axes[k].len();
        }
        out
    }

    pub fn points(&self) -> impl Iterator<Item = [f64; 5]> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub huber_delta: f64,
    pub init_grid: InitGrid,
    /// Values of `ln R*` tried for both `R*_N` and `R*_D` in stage two.
    pub decay_grid: Vec<f64>,
    pub opt: OptConfig,
    /// Evaluate grid starts concurrently. Results are identical either way.
    pub parallel: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            huber_delta: DEFAULT_HUBER_DELTA,
            init_grid: InitGrid::default(),
            decay_grid: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            opt: OptConfig::default(),
            parallel: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.huber_delta.is_finite() && self.huber_delta > 0.0) {
            return Err(LawFitError::InvalidConfig(format!(
                "huber_delta = {} must be > 0",
                self.huber_delta
            )));
        }
        if self.init_grid.is_empty() || self.decay_grid.is_empty() {
            return Err(LawFitError::InvalidConfig("initialization grid is empty".into()));
        }
        self.opt.validate()?;
        Ok(())
    }
}

/// Result of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport<P> {
    pub params: P,
    /// Huber objective evaluated at `params`.
    pub objective: f64,
    pub n_runs_used: usize,
    /// Flat grid index of the winning start.
    pub winning_init: usize,
    /// Whether the winning start met the gradient tolerance.
    pub converged: bool,
    /// Starts that errored (non-finite evaluations).
    pub failed_starts: usize,
    pub run_ids: Vec<String>,
    /// `log L̂ − log L` per run used, aligned with `run_ids`.
    pub per_run_residuals: Vec<f64>,
}
