use std::collections::VecDeque;

use super::line_search::strong_wolfe;
use super::{dot, norm, Objective, OptConfig, OptError, OptResult, Termination};

struct Correction {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Minimizes `obj` from `x0` with limited-memory BFGS.
///
/// A line-search failure is not an error: the best point so far comes back
/// with `converged = false`. Errors are reserved for an invalid config or a
/// non-finite objective at an accepted point.
pub fn minimize(obj: &impl Objective, x0: &[f64], config: &OptConfig) -> Result<OptResult, OptError> {
    config.validate()?;
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = obj.value_and_gradient(&x, &mut g);
    check_finite(f, &g, &x)?;

    let mut memory: VecDeque<Correction> = VecDeque::with_capacity(config.memory_pairs);
    let mut gnorm = norm(&g);
    let mut iterations = 0;
    let termination = loop {
        if gnorm <= config.grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= config.max_iters {
            break Termination::MaxIterations;
        }

        let mut dir = two_loop(&g, &memory);
        let mut d0 = dot(&g, &dir);
        if !(d0 < 0.0) || !d0.is_finite() {
            memory.clear();
            dir = g.iter().map(|v| -v).collect();
            d0 = -gnorm * gnorm;
        }
        // Without curvature information, take a unit-length first step.
        let alpha_init = if memory.is_empty() {
            (1.0 / norm(&dir)).min(1.0)
        } else {
            1.0
        };

        let Some(step) = strong_wolfe(obj, &x, f, d0, &dir, alpha_init, config.line_search) else {
            if memory.is_empty() {
                break Termination::LineSearchFailed;
            }
            // Retry once along steepest descent with a fresh memory.
            memory.clear();
            continue;
        };
        check_finite(step.f, &step.g, &step.x)?;
        iterations += 1;

        let s: Vec<f64> = dir.iter().map(|p| step.alpha * p).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > f64::EPSILON * norm(&s) * norm(&y) {
            if memory.len() == config.memory_pairs {
                memory.pop_front();
            }
            memory.push_back(Correction { s, y, rho: 1.0 / sy });
        }
        x = step.x;
        f = step.f;
        g = step.g;
        gnorm = norm(&g);
    };

    Ok(OptResult {
        converged: termination == Termination::GradientTolerance,
        x_min: x,
        f_min: f,
        grad_norm: gnorm,
        iterations,
        termination,
    })
}

/// Search direction `−H·g` from the stored corrections.
fn two_loop(g: &[f64], memory: &VecDeque<Correction>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for c in memory.iter().rev() {
        let a = c.rho * dot(&c.s, &q);
        for (qi, yi) in q.iter_mut().zip(&c.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some(last) = memory.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (c, a) in memory.iter().zip(alphas.iter().rev()) {
        let b = c.rho * dot(&c.y, &q);
        for (qi, si) in q.iter_mut().zip(&c.s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

fn check_finite(f: f64, g: &[f64], x: &[f64]) -> Result<(), OptError> {
    if !f.is_finite() {
        return Err(OptError::NonFinite {
            what: "objective",
            point: x.to_vec(),
        });
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(OptError::NonFinite {
            what: "gradient",
            point: x.to_vec(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numopt::FnObjective;
    use proptest::prelude::*;

    fn shifted_quadratic() -> impl Objective {
        FnObjective::new(
            move |x: &[f64]| x.iter().enumerate().map(|(i, v)| (v - (i + 1) as f64).powi(2)).sum(),
            move |x: &[f64]| x.iter().enumerate().map(|(i, v)| 2.0 * (v - (i + 1) as f64)).collect(),
        )
    }

    fn rosenbrock() -> impl Objective {
        FnObjective::new(
            |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            |x: &[f64]| {
                vec![
                    -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                    200.0 * (x[1] - x[0] * x[0]),
                ]
            },
        )
    }

    #[test]
    fn quadratic_minimum() {
        for n in [1, 2, 5, 10] {
            let r = minimize(&shifted_quadratic(), &vec![0.0; n], &OptConfig::default()).unwrap();
            assert!(r.converged);
            for (i, v) in r.x_min.iter().enumerate() {
                assert!((v - (i + 1) as f64).abs() < 1e-8, "n={n} x={:?}", r.x_min);
            }
        }
    }

    #[test]
    fn rosenbrock_minimum() {
        let r = minimize(&rosenbrock(), &[-1.2, 1.0], &OptConfig::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert!(
            (r.x_min[0] - 1.0).abs() < 1e-6 && (r.x_min[1] - 1.0).abs() < 1e-6,
            "{r:?}"
        );
    }

    #[test]
    fn deterministic() {
        let a = minimize(&rosenbrock(), &[-1.2, 1.0], &OptConfig::default()).unwrap();
        let b = minimize(&rosenbrock(), &[-1.2, 1.0], &OptConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn converged_flag_is_honest_under_iteration_cap() {
        let cfg = OptConfig {
            max_iters: 3,
            ..OptConfig::default()
        };
        let r = minimize(&rosenbrock(), &[-1.2, 1.0], &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.termination, Termination::MaxIterations);
        assert!(r.grad_norm > cfg.grad_tol);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let obj = FnObjective::new(|x: &[f64]| x[0].ln(), |x: &[f64]| vec![1.0 / x[0]]);
        assert!(matches!(
            minimize(&obj, &[-1.0], &OptConfig::default()),
            Err(OptError::NonFinite { .. })
        ));
    }

    #[test]
    fn unbounded_domain_edge_backtracks() {
        // Objective is +inf for x <= 0; minimum at x = 1.
        let obj = FnObjective::new(
            |x: &[f64]| if x[0] > 0.0 { x[0] - x[0].ln() } else { f64::INFINITY },
            |x: &[f64]| vec![1.0 - 1.0 / x[0]],
        );
        let r = minimize(&obj, &[20.0], &OptConfig::default()).unwrap();
        assert!((r.x_min[0] - 1.0).abs() < 1e-7, "{r:?}");
    }

    #[test]
    fn line_search_failure_is_soft() {
        // Gradient inconsistent with the objective: no descent possible.
        let obj = FnObjective::new(|x: &[f64]| x[0] * x[0], |x: &[f64]| vec![-2.0 * x[0]]);
        let r = minimize(&obj, &[1.0], &OptConfig::default()).unwrap();
        assert!(!r.converged);
        assert_eq!(r.termination, Termination::LineSearchFailed);
        assert_eq!(r.x_min, vec![1.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn convex_quadratics_converge(
            n in 1usize..=20,
            seed in proptest::collection::vec(-1.0f64..1.0, 20 * 20 + 20),
            x0 in proptest::collection::vec(-10.0f64..10.0, 20),
        ) {
            // Q = MᵀM + I is positive definite; f = ½ xᵀQx − bᵀx.
            let m: Vec<f64> = seed[..n * n].to_vec();
            let b: Vec<f64> = seed[400..400 + n].to_vec();
            let mut q = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    q[i * n + j] = (0..n).map(|k| m[k * n + i] * m[k * n + j]).sum::<f64>()
                        + if i == j { 1.0 } else { 0.0 };
                }
            }
            let qx = |x: &[f64]| -> Vec<f64> {
                (0..n).map(|i| (0..n).map(|j| q[i * n + j] * x[j]).sum()).collect()
            };
            let obj = FnObjective::new(
                |x: &[f64]| 0.5 * dot(x, &qx(x)) - dot(&b, x),
                |x: &[f64]| qx(x).iter().zip(&b).map(|(a, bi)| a - bi).collect(),
            );
            let start = &x0[..n];
            let f0 = obj.value(start);
            let r = minimize(&obj, start, &OptConfig::default()).unwrap();
            prop_assert!(r.converged, "{:?}", r);
            prop_assert!(r.grad_norm <= 1e-8);
            prop_assert!(r.f_min <= f0);
        }
    }
}
