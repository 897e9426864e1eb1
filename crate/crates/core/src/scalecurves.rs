//! Pareto envelopes of `(compute, value)` points and power-law fits in
//! log-log space.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::runstore::CurveSet;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CurveError {
    #[error("no points")]
    Empty,
    #[error("point {index}: {message}")]
    InvalidPoint { index: usize, message: String },
    #[error("need at least 2 points with distinct compute, got {0}")]
    Degenerate(usize),
    #[error("metric {0:?} is absent from every curve point")]
    MissingMetric(String),
}

pub type Result<T> = std::result::Result<T, CurveError>;

/// Which direction is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Lower values dominate (loss).
    Min,
    /// Higher values dominate (accuracy).
    Max,
}

impl Orientation {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Orientation::Min => a < b,
            Orientation::Max => a > b,
        }
    }

    fn cmp_best_first(self, a: f64, b: f64) -> Ordering {
        match self {
            Orientation::Min => a.total_cmp(&b),
            Orientation::Max => b.total_cmp(&a),
        }
    }
}

/// Points not dominated by any point of smaller or equal compute, sorted by
/// compute. A kept point is strictly better than everything before it; among
/// equal-compute points only the best survives.
pub fn pareto_envelope(points: &[(f64, f64)], orientation: Orientation) -> Result<Vec<(f64, f64)>> {
    if points.is_empty() {
        return Err(CurveError::Empty);
    }
    for (index, &(c, v)) in points.iter().enumerate() {
        if !(c.is_finite() && c > 0.0) {
            return Err(CurveError::InvalidPoint {
                index,
                message: format!("compute {c} must be finite and > 0"),
            });
        }
        if !v.is_finite() {
            return Err(CurveError::InvalidPoint {
                index,
                message: format!("value {v} is not finite"),
            });
        }
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(orientation.cmp_best_first(a.1, b.1)));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for p in sorted {
        match out.last() {
            Some(&(_, best)) if !orientation.better(p.1, best) => {}
            _ => out.push(p),
        }
    }
    Ok(out)
}

/// `value = coefficient · compute^exponent`, fitted by least squares on logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub coefficient: f64,
    pub exponent: f64,
    /// Zero when the values are constant.
    pub r_squared: f64,
    /// `[C_min, C_max]` of the supporting points.
    pub domain: [f64; 2],
    pub n_points: usize,
}

impl PowerLawFit {
    pub fn predict(&self, compute: f64) -> f64 {
        self.coefficient * compute.powf(self.exponent)
    }

    pub fn in_domain(&self, compute: f64) -> bool {
        compute >= self.domain[0] && compute <= self.domain[1]
    }
}

/// Ordinary least squares of `ln value` on `ln compute`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    for (index, &(c, v)) in points.iter().enumerate() {
        if !(c.is_finite() && c > 0.0 && v.is_finite() && v > 0.0) {
            return Err(CurveError::InvalidPoint {
                index,
                message: format!("compute {c} and value {v} must both be finite and > 0"),
            });
        }
    }
    let c_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let c_max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if points.len() < 2 || !(c_min < c_max) {
        return Err(CurveError::Degenerate(points.len()));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        0.0
    } else {
        let ss_res: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(PowerLawFit {
        coefficient: intercept.exp(),
        exponent: slope,
        r_squared,
        domain: [c_min, c_max],
        n_points: points.len(),
    })
}

/// Envelope of minimal loss per FLOP across all curves, then its power law.
pub fn loss_compute_law(curves: &CurveSet) -> Result<PowerLawFit> {
    let points: Vec<(f64, f64)> = curves.points().iter().map(|p| (p.compute, p.loss)).collect();
    let env = pareto_envelope(&points, Orientation::Min)?;
    fit_power_law(&env)
}

/// `(compute, metric)` for every checkpoint carrying `metric`.
pub fn metric_points(curves: &CurveSet, metric: &str) -> Vec<(f64, f64)> {
    curves
        .points()
        .iter()
        .filter_map(|p| p.metrics.get(metric).map(|&v| (p.compute, v)))
        .collect()
}

/// Envelope of maximal `metric` per FLOP, then its power law. When every
/// value is identical the envelope is flat: the fit spans all points with
/// zero slope and `r² = 0`.
pub fn metric_compute_law(curves: &CurveSet, metric: &str) -> Result<PowerLawFit> {
    let points = metric_points(curves, metric);
    if points.is_empty() {
        return Err(CurveError::MissingMetric(metric.to_string()));
    }
    let first = points[0].1;
    if points.len() >= 2 && points.iter().all(|p| p.1 == first) {
        return fit_power_law(&points);
    }
    let env = pareto_envelope(&points, Orientation::Max)?;
    fit_power_law(&env)
}

/// The envelope used by [`loss_compute_law`] or [`metric_compute_law`].
pub fn envelope_for(curves: &CurveSet, metric: Option<&str>) -> Result<Vec<(f64, f64)>> {
    match metric {
        None => {
            let points: Vec<_> = curves.points().iter().map(|p| (p.compute, p.loss)).collect();
            pareto_envelope(&points, Orientation::Min)
        }
        Some(m) => {
            let points = metric_points(curves, m);
            if points.is_empty() {
                return Err(CurveError::MissingMetric(m.to_string()));
            }
            pareto_envelope(&points, Orientation::Max)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runstore::CurvePoint;
    use proptest::prelude::*;

    fn curve(run: &str, pts: &[(f64, f64)]) -> Vec<CurvePoint> {
        pts.iter()
            .map(|&(c, l)| CurvePoint {
                run_id: run.into(),
                compute: c,
                loss: l,
                metrics: Default::default(),
            })
            .collect()
    }

    #[test]
    fn envelope_example() {
        let env = pareto_envelope(&[(1.0, 5.0), (2.0, 4.0), (2.0, 6.0), (3.0, 4.5)], Orientation::Min).unwrap();
        assert_eq!(env, vec![(1.0, 5.0), (2.0, 4.0)]);
        assert_eq!(
            pareto_envelope(&[(7.0, 1.0)], Orientation::Max).unwrap(),
            vec![(7.0, 1.0)]
        );
        assert_eq!(pareto_envelope(&[], Orientation::Min), Err(CurveError::Empty));
    }

    #[test]
    fn envelope_max_orientation() {
        let env = pareto_envelope(&[(1.0, 50.0), (2.0, 49.0), (2.0, 55.0), (3.0, 60.0)], Orientation::Max).unwrap();
        assert_eq!(env, vec![(1.0, 50.0), (2.0, 55.0), (3.0, 60.0)]);
    }

    #[test]
    fn envelope_rejects_bad_compute() {
        assert!(pareto_envelope(&[(0.0, 1.0)], Orientation::Min).is_err());
    }

    #[test]
    fn exact_power_law() {
        let pts: Vec<_> = [1e18, 1e20, 1e22]
            .iter()
            .map(|&c: &f64| (c, 10.0 * c.powf(-0.05)))
            .collect();
        assert!((pts[0].1 - 1.258_925_411_794_167_2).abs() < 1e-12);
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.exponent + 0.05).abs() < 1e-9);
        assert!((fit.coefficient / 10.0 - 1.0).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-9);
        assert_eq!(fit.domain, [1e18, 1e22]);
        assert_eq!(fit.n_points, 3);
    }

    #[test]
    fn two_points_interpolate() {
        let fit = fit_power_law(&[(10.0, 3.0), (1000.0, 1.5)]).unwrap();
        assert!((fit.predict(10.0) - 3.0).abs() < 1e-12);
        assert!((fit.predict(1000.0) - 1.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_law_errors() {
        assert!(matches!(fit_power_law(&[(1.0, 1.0)]), Err(CurveError::Degenerate(1))));
        assert!(matches!(
            fit_power_law(&[(1.0, 1.0), (1.0, 2.0)]),
            Err(CurveError::Degenerate(2))
        ));
        assert!(matches!(
            fit_power_law(&[(1.0, 1.0), (2.0, -2.0)]),
            Err(CurveError::InvalidPoint { .. })
        ));
    }

    #[test]
    fn constant_values_zero_r_squared() {
        let fit = fit_power_law(&[(1.0, 5.0), (10.0, 5.0), (100.0, 5.0)]).unwrap();
        assert_eq!(fit.exponent, 0.0);
        assert_eq!(fit.r_squared, 0.0);
        assert!((fit.coefficient - 5.0).abs() < 1e-12);
    }

    #[test]
    fn loss_law_from_one_exact_curve() {
        let pts: Vec<_> = (0..10)
            .map(|i| 1e17 * 3f64.powi(i))
            .map(|c| (c, 7.0 * c.powf(-0.04)))
            .collect();
        let set = CurveSet::new(curve("a", &pts)).unwrap();
        let fit = loss_compute_law(&set).unwrap();
        assert!((fit.exponent + 0.04).abs() < 1e-9);
        assert!((fit.coefficient / 7.0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dominated_curve_ignored() {
        let good: Vec<_> = (0..6)
            .map(|i| 1e18 * 2f64.powi(i))
            .map(|c| (c, 5.0 * c.powf(-0.03)))
            .collect();
        let bad: Vec<_> = good.iter().map(|&(c, l)| (c * 1.01, l * 1.2)).collect();
        let mut pts = curve("good", &good);
        pts.extend(curve("bad", &bad));
        let fit = loss_compute_law(&CurveSet::new(pts).unwrap()).unwrap();
        assert_eq!(fit.n_points, good.len());
        assert!((fit.exponent + 0.03).abs() < 1e-9);
    }

    #[test]
    fn metric_law_exact_and_constant() {
        let mut pts = curve("a", &[(1e18, 3.0), (1e19, 2.9), (1e20, 2.8), (1e21, 2.7)]);
        for p in &mut pts {
            p.metrics.insert("blimp".into(), 30.0 * p.compute.powf(0.021));
            p.metrics.insert("flat".into(), 55.0);
        }
        let set = CurveSet::new(pts).unwrap();
        let fit = metric_compute_law(&set, "blimp").unwrap();
        assert!((fit.exponent - 0.021).abs() < 1e-9);
        assert!((fit.coefficient / 30.0 - 1.0).abs() < 1e-9);
        let flat = metric_compute_law(&set, "flat").unwrap();
        assert_eq!(flat.exponent, 0.0);
        assert_eq!(flat.r_squared, 0.0);
        assert_eq!(
            metric_compute_law(&set, "nope"),
            Err(CurveError::MissingMetric("nope".into()))
        );
    }

    fn brute_force(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let mut kept: Vec<(f64, f64)> = points
            .iter()
            .enumerate()
            .filter(|&(i, &(c, v))| {
                !points
                    .iter()
                    .enumerate()
                    .any(|(j, &(cj, vj))| j != i && cj <= c && (vj < v || (vj == v && (cj < c || j < i))))
            })
            .map(|(_, &p)| p)
            .collect();
        kept.sort_by(|a, b| a.0.total_cmp(&b.0));
        kept
    }

    proptest! {
        #[test]
        fn envelope_matches_brute_force(pts in proptest::collection::vec((1u32..50, 1u32..50), 1..60)) {
            // Small integer grids force ties in both coordinates.
            let pts: Vec<(f64, f64)> = pts.into_iter().map(|(c, v)| (c as f64, v as f64)).collect();
            let env = pareto_envelope(&pts, Orientation::Min).unwrap();
            prop_assert_eq!(&env, &brute_force(&pts));
            prop_assert_eq!(pareto_envelope(&env, Orientation::Min).unwrap(), env);
        }

        #[test]
        fn power_law_scale_equivariance(
            k in 0.1f64..100.0, g in -0.5f64..0.5, s in 0.01f64..100.0,
            noise in proptest::collection::vec(-0.1f64..0.1, 6),
        ) {
            let pts: Vec<(f64, f64)> = noise.iter().enumerate()
                .map(|(i, e)| { let c = 1e15 * 10f64.powi(i as i32); (c, k * c.powf(g) * e.exp()) })
                .collect();
            let base = fit_power_law(&pts).unwrap();
            let scaled_v: Vec<_> = pts.iter().map(|&(c, v)| (c, v * s)).collect();
            let scaled_c: Vec<_> = pts.iter().map(|&(c, v)| (c * s, v)).collect();
            let fv = fit_power_law(&scaled_v).unwrap();
            let fc = fit_power_law(&scaled_c).unwrap();
            prop_assert!((fv.coefficient / (base.coefficient * s) - 1.0).abs() < 1e-9);
            prop_assert!((fv.exponent - base.exponent).abs() < 1e-9);
            prop_assert!((fc.exponent - base.exponent).abs() < 1e-9);
        }
    }
}
