use rayon::prelude::*;

use crate::alloc::optimal_params_for_tokens;
use crate::numopt::{minimize, Objective, OptConfig};
use crate::runstore::{RunRecord, RunSet};

use super::objective::{MultiEpochObjective, SingleEpochObjective};
use super::{
    ChinchillaParams, FitConfig, FitReport, LawFitError, MultiEpochParams, Result, SINGLE_EPOCH_MAX_REPETITIONS,
};

/// Unknowns in the single-epoch law; a fit needs strictly more runs.
const SINGLE_EPOCH_UNKNOWNS: usize = 5;
const MIN_MULTI_EPOCH_RUNS: usize = 2;

pub fn single_epoch_runs(runs: &RunSet) -> Vec<&RunRecord> {
    runs.iter()
        .filter(|r| r.epochs() <= SINGLE_EPOCH_MAX_REPETITIONS)
        .collect()
}

pub fn multi_epoch_runs(runs: &RunSet) -> Vec<&RunRecord> {
    runs.iter()
        .filter(|r| r.epochs() > SINGLE_EPOCH_MAX_REPETITIONS)
        .collect()
}

#[derive(Debug, Clone)]
pub(crate) struct StartOutcome {
    pub index: usize,
    pub f: f64,
    pub x: Vec<f64>,
    pub converged: bool,
}

/// Runs L-BFGS from every `(index, x0)` and returns the outcome minimal in
/// `(objective, index)` among those `accept` admits, plus the number of
/// starts that errored. The result does not depend on the order of `starts`
/// or on `parallel`.
pub(crate) fn multistart<O: Objective + Sync>(
    obj: &O,
    starts: &[(usize, Vec<f64>)],
    opt: &OptConfig,
    parallel: bool,
    accept: impl Fn(&[f64]) -> bool + Sync,
) -> (Option<StartOutcome>, usize) {
    let solve = |(index, x0): &(usize, Vec<f64>)| -> Option<StartOutcome> {
        let r = minimize(obj, x0, opt).ok()?;
        r.f_min.is_finite().then_some(StartOutcome {
            index: *index,
            f: r.f_min,
            x: r.x_min,
            converged: r.converged,
        })
    };
    let outcomes: Vec<Option<StartOutcome>> = if parallel {
        starts.par_iter().map(solve).collect()
    } else {
        starts.iter().map(solve).collect()
    };
    let failed = outcomes.iter().filter(|o| o.is_none()).count();
    let best = outcomes
        .into_iter()
        .flatten()
        .filter(|o| accept(&o.x))
        .min_by(|a, b| a.f.total_cmp(&b.f).then(a.index.cmp(&b.index)));
    (best, failed)
}

fn distinct_count(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<u64> = values.map(f64::to_bits).collect();
    v.sort_unstable();
    v.dedup();
    v.len()
}

pub(crate) fn single_epoch_objective(runs: &RunSet, delta: f64) -> Result<(SingleEpochObjective, Vec<String>)> {
    let used = single_epoch_runs(runs);
    if used.len() <= SINGLE_EPOCH_UNKNOWNS {
        return Err(LawFitError::TooFewRuns {
            what: "single-epoch",
            needed: SINGLE_EPOCH_UNKNOWNS + 1,
            got: used.len(),
        });
    }
    if distinct_count(used.iter().map(|r| r.n_params)) < 2 {
        return Err(LawFitError::DegenerateSpan("all runs share one model size".into()));
    }
    if distinct_count(used.iter().map(|r| r.d_tokens)) < 2 {
        return Err(LawFitError::DegenerateSpan("all runs share one token count".into()));
    }
    let obj = SingleEpochObjective::new(used.iter().map(|r| (r.n_params, r.d_tokens, r.test_loss)), delta);
    Ok((obj, used.iter().map(|r| r.run_id.clone()).collect()))
}

/// Stage one: fits `(E, A, B, α, β)` on the single-epoch runs.
pub fn fit_single_epoch(runs: &RunSet, config: &FitConfig) -> Result<FitReport<ChinchillaParams>> {
    config.validate()?;
    let (obj, run_ids) = single_epoch_objective(runs, config.huber_delta)?;
    let starts: Vec<(usize, Vec<f64>)> = config
        .init_grid
        .points()
        .enumerate()
        .map(|(i, p)| (i, p.to_vec()))
        .collect();
    let accept = |x: &[f64]| ChinchillaParams::from_transformed(x).validate().is_ok();
    let (best, failed) = multistart(&obj, &starts, &config.opt, config.parallel, accept);
    let best = best.ok_or(LawFitError::AllStartsFailed(starts.len()))?;
    let params = ChinchillaParams::from_transformed(&best.x);
    Ok(FitReport {
        params,
        objective: obj.value_at(&params),
        n_runs_used: obj.len(),
        winning_init: best.index,
        converged: best.converged,
        failed_starts: failed,
        run_ids,
        per_run_residuals: obj.residuals(&params.to_transformed()),
    })
}

pub(crate) fn multi_epoch_objective(
    runs: &RunSet,
    base: &ChinchillaParams,
    delta: f64,
) -> Result<(MultiEpochObjective, Vec<String>)> {
    base.validate()?;
    let used = multi_epoch_runs(runs);
    if used.is_empty() {
        return Err(LawFitError::NoMultiEpochRuns);
    }
    if used.len() < MIN_MULTI_EPOCH_RUNS {
        return Err(LawFitError::TooFewRuns {
            what: "multi-epoch",
            needed: MIN_MULTI_EPOCH_RUNS,
            got: used.len(),
        });
    }
    let points: Vec<_> = used
        .iter()
        .map(|r| {
            let u_n = optimal_params_for_tokens(base, r.u_tokens);
            (r.n_params, r.d_tokens, r.u_tokens, u_n, r.test_loss)
        })
        .collect();
    if points.iter().any(|p| !(p.3.is_finite() && p.3 > 0.0)) {
        return Err(LawFitError::InvalidParams(
            "base law yields a non-finite optimal model size".into(),
        ));
    }
    let obj = MultiEpochObjective::new(*base, points, delta);
    Ok((obj, used.iter().map(|r| r.run_id.clone()).collect()))
}

/// Stage two: fits `(R*_N, R*_D)` on the multi-epoch runs with `base` fixed.
pub fn fit_multi_epoch(
    runs: &RunSet,
    base: &ChinchillaParams,
    config: &FitConfig,
) -> Result<FitReport<MultiEpochParams>> {
    config.validate()?;
    let (obj, run_ids) = multi_epoch_objective(runs, base, config.huber_delta)?;
    let grid = &config.decay_grid;
    let starts: Vec<(usize, Vec<f64>)> = grid
        .iter()
        .flat_map(|&rn| grid.iter().map(move |&rd| vec![rn, rd]))
        .enumerate()
        .collect();
    let to_params = |x: &[f64]| MultiEpochParams {
        base: *base,
        r_star_n: x[0].exp(),
        r_star_d: x[1].exp(),
    };
    let accept = |x: &[f64]| to_params(x).validate().is_ok();
    let (best, failed) = multistart(&obj, &starts, &config.opt, config.parallel, accept);
    let best = best.ok_or(LawFitError::AllStartsFailed(starts.len()))?;
    let params = to_params(&best.x);
    let x = [params.r_star_n.ln(), params.r_star_d.ln()];
    Ok(FitReport {
        params,
        objective: obj.value_at(&params),
        n_runs_used: obj.len(),
        winning_init: best.index,
        converged: best.converged,
        failed_starts: failed,
        run_ids,
        per_run_residuals: obj.residuals(&x),
    })
}
