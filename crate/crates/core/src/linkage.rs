//! Loss versus downstream-metric regression, cross-modality efficiency
//! ratios and compute-parity projection.

use serde::{Deserialize, Serialize};

use crate::runstore::RunSet;
use crate::scalecurves::PowerLawFit;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinkageError {
    #[error("metric {0:?} is absent from every run")]
    MissingMetric(String),
    #[error("need at least 2 runs after filtering, got {0}")]
    TooFewPoints(usize),
    #[error("all surviving runs share the same loss")]
    DegenerateLoss,
    #[error("exponents must be non-zero, got {gamma_ref} and {gamma_other}")]
    ZeroExponent { gamma_ref: f64, gamma_other: f64 },
    #[error("exponents {gamma_ref} and {gamma_other} have opposite signs")]
    OppositeSigns { gamma_ref: f64, gamma_other: f64 },
    #[error("target value {0} must be finite and > 0")]
    InvalidTarget(f64),
    #[error("c_ref = {0} must be finite and > 0")]
    InvalidCompute(f64),
}

pub type Result<T> = std::result::Result<T, LinkageError>;

/// Drops saturated runs. Off when both bounds are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SaturationFilter {
    /// Keep runs whose metric is `<= metric_cap`.
    pub metric_cap: Option<f64>,
    /// Keep runs whose loss is `>= loss_min`.
    pub loss_min: Option<f64>,
}

impl SaturationFilter {
    pub fn keeps(&self, loss: f64, metric: f64) -> bool {
        self.metric_cap.is_none_or(|cap| metric <= cap) && self.loss_min.is_none_or(|m| loss >= m)
    }

    pub fn describe(&self) -> String {
        match (self.metric_cap, self.loss_min) {
            (None, None) => "none".into(),
            (Some(c), None) => format!("metric <= {c}"),
            (None, Some(l)) => format!("loss >= {l}"),
            (Some(c), Some(l)) => format!("metric <= {c} and loss >= {l}"),
        }
    }
}

/// `metric = slope · loss + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Zero when the metric is constant.
    pub pearson_r: f64,
    pub n_points: usize,
    pub filter_applied: String,
}

impl LinearFit {
    pub fn predict(&self, loss: f64) -> f64 {
        self.slope * loss + self.intercept
    }
}

/// Ordinary least squares of `metric` on `test_loss` across runs carrying the
/// metric and passing `filter`.
pub fn loss_metric_correlation(runs: &RunSet, metric: &str, filter: SaturationFilter) -> Result<LinearFit> {
    let carrying: Vec<(f64, f64)> = runs
        .iter()
        .filter_map(|r| r.metrics.get(metric).map(|&m| (r.test_loss, m)))
        .collect();
    if carrying.is_empty() {
        return Err(LinkageError::MissingMetric(metric.to_string()));
    }
    let mut pts: Vec<(f64, f64)> = carrying.into_iter().filter(|&(l, m)| filter.keeps(l, m)).collect();
    if pts.len() < 2 {
        return Err(LinkageError::TooFewPoints(pts.len()));
    }
    // Sorted so the sums, and therefore the result, ignore run order.
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(LinkageError::DegenerateLoss);
    }
    let slope = sxy / sxx;
    let pearson_r = if syy == 0.0 {
        0.0
    } else {
        (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
    };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        pearson_r,
        n_points: pts.len(),
        filter_applied: filter.describe(),
    })
}

/// Relative scaling efficiency of two modalities on one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub metric: String,
    pub gamma_ref: f64,
    pub gamma_other: f64,
    /// `gamma_ref / gamma_other`.
    pub ratio: f64,
    /// `10^ratio`: compute factor the other modality needs to match a tenfold
    /// increase in the reference modality.
    pub compute_multiplier: f64,
}

fn check_exponents(gamma_ref: f64, gamma_other: f64) -> Result<()> {
    if gamma_ref == 0.0 || gamma_other == 0.0 || !gamma_ref.is_finite() || !gamma_other.is_finite() {
        return Err(LinkageError::ZeroExponent { gamma_ref, gamma_other });
    }
    if gamma_ref.signum() != gamma_other.signum() {
        return Err(LinkageError::OppositeSigns { gamma_ref, gamma_other });
    }
    Ok(())
}

/// Ratio of two metric exponents.
pub fn exponent_ratio(gamma_ref: f64, gamma_other: f64, metric: &str) -> Result<EfficiencyReport> {
    check_exponents(gamma_ref, gamma_other)?;
    let ratio = gamma_ref / gamma_other;
    Ok(EfficiencyReport {
        metric: metric.to_string(),
        gamma_ref,
        gamma_other,
        ratio,
        compute_multiplier: 10f64.powf(ratio),
    })
}

pub fn efficiency_ratio(fit_ref: &PowerLawFit, fit_other: &PowerLawFit, metric: &str) -> Result<EfficiencyReport> {
    exponent_ratio(fit_ref.exponent, fit_other.exponent, metric)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityProjection {
    pub c_ref: f64,
    /// Reference modality's predicted value at `c_ref`.
    pub target_value: f64,
    /// Compute at which the other modality reaches `target_value`.
    pub c_other: f64,
    /// `c_ref` lies outside the reference fit's domain.
    pub ref_extrapolated: bool,
    /// `c_other` lies outside the other fit's domain.
    pub other_extrapolated: bool,
}

/// Solves `k_other · C^γ_other = k_ref · c_ref^γ_ref` for `C`.
pub fn project_parity(fit_ref: &PowerLawFit, fit_other: &PowerLawFit, c_ref: f64) -> Result<ParityProjection> {
    check_exponents(fit_ref.exponent, fit_other.exponent)?;
    if !(c_ref.is_finite() && c_ref > 0.0) {
        return Err(LinkageError::InvalidCompute(c_ref));
    }
    let target_value = fit_ref.predict(c_ref);
    if !(target_value.is_finite() && target_value > 0.0) {
        return Err(LinkageError::InvalidTarget(target_value));
    }
    let ln_c =
        (fit_ref.coefficient.ln() - fit_other.coefficient.ln() + fit_ref.exponent * c_ref.ln()) / fit_other.exponent;
    let c_other = ln_c.exp();
    Ok(ParityProjection {
        c_ref,
        target_value,
        c_other,
        ref_extrapolated: !fit_ref.in_domain(c_ref),
        other_extrapolated: !fit_other.in_domain(c_other),
    })
}
