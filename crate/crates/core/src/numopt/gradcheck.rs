use super::{Objective, OptError};

/// Central-difference gradient of `obj` at `x`. Coordinate `i` is perturbed by
/// `step · max(1, |x_i|)`.
pub fn central_difference(obj: &impl Objective, x: &[f64], step: f64) -> Result<Vec<f64>, OptError> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = step * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let fp = obj.value(&probe);
        probe[i] = x[i] - h;
        let fm = obj.value(&probe);
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(OptError::NonFinite {
                what: "objective",
                point: probe,
            });
        }
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// Max over coordinates of `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check(obj: &impl Objective, x: &[f64], step: f64) -> Result<f64, OptError> {
    let mut analytic = vec![0.0; x.len()];
    obj.gradient(x, &mut analytic);
    if analytic.iter().any(|g| !g.is_finite()) {
        return Err(OptError::NonFinite {
            what: "gradient",
            point: x.to_vec(),
        });
    }
    let numeric = central_difference(obj, x, step)?;
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
        .fold(0.0, f64::max))
}
