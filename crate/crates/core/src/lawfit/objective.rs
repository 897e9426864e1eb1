use crate::numopt::{huber, huber_derivative, Objective};

use super::{ChinchillaParams, MultiEpochParams};

/// `ln(e^x0 + e^x1 + e^x2)` and its softmax weights.
fn log_sum_exp3(v: [f64; 3]) -> (f64, [f64; 3]) {
    let m = v[0].max(v[1]).max(v[2]);
    let w = v.map(|x| (x - m).exp());
    let s = w[0] + w[1] + w[2];
    (m + s.ln(), w.map(|x| x / s))
}

/// Huber objective of stage one over `x = (ln E, ln A, ln B, α, β)`:
/// `Σ huber_δ(LSE(ln E, ln A − α·ln N, ln B − β·ln D) − ln L)`.
#[derive(Debug, Clone)]
pub struct SingleEpochObjective {
    log_n: Vec<f64>,
    log_d: Vec<f64>,
    log_loss: Vec<f64>,
    delta: f64,
}

impl SingleEpochObjective {
    /// `points` are `(N, D, L)` triples.
    pub fn new(points: impl IntoIterator<Item = (f64, f64, f64)>, delta: f64) -> Self {
        let mut obj = SingleEpochObjective {
            log_n: Vec::new(),
            log_d: Vec::new(),
            log_loss: Vec::new(),
            delta,
        };
        for (n, d, l) in points {
            obj.log_n.push(n.ln());
            obj.log_d.push(d.ln());
            obj.log_loss.push(l.ln());
        }
        obj
    }

    pub fn len(&self) -> usize {
        self.log_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_loss.is_empty()
    }

    fn terms(&self, x: &[f64], i: usize) -> [f64; 3] {
        [x[0], x[1] - x[3] * self.log_n[i], x[2] - x[4] * self.log_d[i]]
    }

    /// `ln L̂ − ln L` for every point.
    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| log_sum_exp3(self.terms(x, i)).0 - self.log_loss[i])
            .collect()
    }

    /// The objective at untransformed parameters.
    pub fn value_at(&self, params: &ChinchillaParams) -> f64 {
        self.value(&params.to_transformed())
    }
}

impl Objective for SingleEpochObjective {
    fn value(&self, x: &[f64]) -> f64 {
        self.residuals(x).into_iter().map(|r| huber(r, self.delta)).sum()
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        self.value_and_gradient(x, grad);
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let mut total = 0.0;
        for i in 0..self.len() {
            let (lse, w) = log_sum_exp3(self.terms(x, i));
            let r = lse - self.log_loss[i];
            total += huber(r, self.delta);
            let h = huber_derivative(r, self.delta);
            grad[0] += h * w[0];
            grad[1] += h * w[1];
            grad[2] += h * w[2];
            grad[3] -= h * w[1] * self.log_n[i];
            grad[4] -= h * w[2] * self.log_d[i];
        }
        total
    }
}

#[derive(Debug, Clone, Copy)]
struct EpochRun {
    n: f64,
    u_n: f64,
    reps_n: f64,
    d: f64,
    u_d: f64,
    reps_d: f64,
    log_loss: f64,
}

/// Huber objective of stage two over `x = (ln R*_N, ln R*_D)` with the base
/// law held fixed.
#[derive(Debug, Clone)]
pub struct MultiEpochObjective {
    base: ChinchillaParams,
    log_base: [f64; 3],
    runs: Vec<EpochRun>,
    delta: f64,
}

/// Effective quantity and its derivative in `ln R*`.
fn effective_with_slope(total: f64, unique: f64, reps: f64, r_star: f64) -> (f64, f64) {
    if reps <= 0.0 {
        return (total, 0.0);
    }
    let z = reps / r_star;
    let decay = (-z).exp();
    let saturation = -(-z).exp_m1();
    let q = unique * (1.0 + r_star * saturation);
    let dq_dr_star = unique * (saturation - z * decay);
    (q, r_star * dq_dr_star)
}

impl MultiEpochObjective {
    /// `points` are `(N, D, U_D, U_N, L)`.
    pub fn new(
        base: ChinchillaParams,
        points: impl IntoIterator<Item = (f64, f64, f64, f64, f64)>,
        delta: f64,
    ) -> Self {
        let runs = points
            .into_iter()
            .map(|(n, d, u_d, u_n, l)| EpochRun {
                n,
                u_n,
                reps_n: n / u_n - 1.0,
                d,
                u_d,
                reps_d: d / u_d - 1.0,
                log_loss: l.ln(),
            })
            .collect();
        MultiEpochObjective {
            base,
            log_base: [base.e.ln(), base.a.ln(), base.b.ln()],
            runs,
            delta,
        }
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    fn eval(&self, x: &[f64], mut grad: Option<&mut [f64]>, residuals: Option<&mut Vec<f64>>) -> f64 {
        let (r_star_n, r_star_d) = (x[0].exp(), x[1].exp());
        let [le, la, lb] = self.log_base;
        let mut total = 0.0;
        let mut res_out = residuals;
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        for run in &self.runs {
            let (n_eff, dn) = effective_with_slope(run.n, run.u_n, run.reps_n, r_star_n);
            let (d_eff, dd) = effective_with_slope(run.d, run.u_d, run.reps_d, r_star_d);
            let (lse, w) = log_sum_exp3([le, la - self.base.alpha * n_eff.ln(), lb - self.base.beta * d_eff.ln()]);
            let r = lse - run.log_loss;
            total += huber(r, self.delta);
            if let Some(out) = res_out.as_deref_mut() {
                out.push(r);
            }
            if let Some(g) = grad.as_deref_mut() {
                let h = huber_derivative(r, self.delta);
                g[0] -= h * w[1] * self.base.alpha * dn / n_eff;
                g[1] -= h * w[2] * self.base.beta * dd / d_eff;
            }
        }
        total
    }

    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.eval(x, None, Some(&mut out));
        out
    }

    pub fn value_at(&self, params: &MultiEpochParams) -> f64 {
        self.value(&[params.r_star_n.ln(), params.r_star_d.ln()])
    }
}

impl Objective for MultiEpochObjective {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x, None, None)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        self.eval(x, Some(grad), None);
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(x, Some(grad), None)
    }
}
