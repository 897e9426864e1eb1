//! Strong-Wolfe line search: bracketing followed by a safeguarded cubic zoom
//! (Nocedal & Wright, algorithms 3.5 and 3.6). Near a minimizer, where the
//! decrease in `f` drops below its rounding error, a trial point is also
//! accepted under the approximate Wolfe test of Hager and Zhang (2005):
//! `f ≤ f0 + ε|f0|` with the curvature condition intact.

use super::{dot, Objective, WolfeParams};

const MAX_BRACKET: usize = 40;
const MAX_ZOOM: usize = 40;
const MAX_STEP: f64 = 1e10;
/// Relative rounding allowance on `f0` for the approximate test.
const ROUNDOFF: f64 = 16.0 * f64::EPSILON;

/// An accepted trial point.
pub(super) struct Step {
    pub alpha: f64,
    pub x: Vec<f64>,
    pub f: f64,
    pub g: Vec<f64>,
    /// False when only sufficient decrease holds (zoom exhausted).
    #[allow(dead_code)]
    pub wolfe: bool,
}

struct Trial {
    alpha: f64,
    f: f64,
    /// Directional derivative; NaN when the point was not finite.
    d: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

impl Trial {
    fn finite(&self) -> bool {
        self.f.is_finite() && self.d.is_finite()
    }
}

struct Probe<'a, O: Objective> {
    obj: &'a O,
    x0: &'a [f64],
    dir: &'a [f64],
}

impl<O: Objective> Probe<'_, O> {
    fn eval(&self, alpha: f64) -> Trial {
        let x: Vec<f64> = self.x0.iter().zip(self.dir).map(|(xi, pi)| xi + alpha * pi).collect();
        let mut g = vec![0.0; x.len()];
        let mut f = self.obj.value_and_gradient(&x, &mut g);
        let mut d = dot(&g, self.dir);
        if !f.is_finite() || !d.is_finite() {
            f = f64::INFINITY;
            d = f64::NAN;
        }
        Trial { alpha, f, d, x, g }
    }
}

fn approx_wolfe(t: &Trial, f0: f64, d0: f64, c2: f64) -> bool {
    t.finite() && t.f <= f0 + ROUNDOFF * f0.abs() && t.d.abs() <= -c2 * d0
}

/// Searches along `dir` from `x0` where `f0`, `d0 = g0·dir < 0`.
/// Returns `None` when no trial point decreases the objective.
pub(super) fn strong_wolfe<O: Objective>(
    obj: &O,
    x0: &[f64],
    f0: f64,
    d0: f64,
    dir: &[f64],
    alpha_init: f64,
    params: WolfeParams,
) -> Option<Step> {
    let probe = Probe { obj, x0, dir };
    let WolfeParams { c1, c2 } = params;
    let armijo = |t: &Trial| t.f <= f0 + c1 * t.alpha * d0;
    let curvature = |t: &Trial| t.d.abs() <= -c2 * d0;

    let mut prev = Trial {
        alpha: 0.0,
        f: f0,
        d: d0,
        x: x0.to_vec(),
        g: Vec::new(),
    };
    let mut alpha = alpha_init;
    for i in 0..MAX_BRACKET {
        let cur = probe.eval(alpha);
        if approx_wolfe(&cur, f0, d0, c2) && !armijo(&cur) {
            return Some(accept(cur, true));
        }
        if !cur.finite() || !armijo(&cur) || (i > 0 && cur.f >= prev.f) {
            return zoom(&probe, prev, cur, f0, d0, params);
        }
        if curvature(&cur) {
            return Some(accept(cur, true));
        }
        if cur.d >= 0.0 {
            return zoom(&probe, cur, prev, f0, d0, params);
        }
        if alpha >= MAX_STEP {
            return Some(accept(cur, false));
        }
        alpha = (2.0 * alpha).min(MAX_STEP);
        prev = cur;
    }
    (prev.alpha > 0.0 && prev.f < f0).then(|| accept(prev, false))
}

fn accept(t: Trial, wolfe: bool) -> Step {
    Step {
        alpha: t.alpha,
        x: t.x,
        f: t.f,
        g: t.g,
        wolfe,
    }
}

/// `lo` satisfies sufficient decrease with the lowest value seen so far;
/// `hi` brackets a strong-Wolfe point together with `lo`.
fn zoom<O: Objective>(
    probe: &Probe<'_, O>,
    mut lo: Trial,
    mut hi: Trial,
    f0: f64,
    d0: f64,
    params: WolfeParams,
) -> Option<Step> {
    let WolfeParams { c1, c2 } = params;
    for _ in 0..MAX_ZOOM {
        let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let width = b - a;
        if width <= f64::EPSILON * b.max(f64::MIN_POSITIVE) {
            break;
        }
        let mut alpha = if hi.finite() {
            cubic_min(lo.alpha, lo.f, lo.d, hi.alpha, hi.f, hi.d).unwrap_or(f64::NAN)
        } else {
            f64::NAN
        };
        let guard = 0.1 * width;
        if !(alpha >= a + guard && alpha <= b - guard) {
            alpha = 0.5 * (lo.alpha + hi.alpha);
        }
        let t = probe.eval(alpha);
        if approx_wolfe(&t, f0, d0, c2) && t.f > f0 + c1 * alpha * d0 {
            return Some(accept(t, true));
        }
        if !t.finite() || t.f > f0 + c1 * alpha * d0 || t.f >= lo.f {
            hi = t;
        } else {
            if t.d.abs() <= -c2 * d0 {
                return Some(accept(t, true));
            }
            if t.d * (hi.alpha - lo.alpha) >= 0.0 {
                hi = std::mem::replace(&mut lo, t);
            } else {
                lo = t;
            }
        }
    }
    (lo.alpha > 0.0 && lo.f < f0).then(|| accept(lo, false))
}

/// Minimizer of the cubic interpolating values and slopes at `a` and `b`.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let denom = db - da + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let t = b - (b - a) * (db + d2 - d1) / denom;
    t.is_finite().then_some(t)
}
