//! `check`: gradient checks of both fit objectives at every grid start and
//! closed-form versus numeric allocation on the built-in constant sets.

use lmscale::alloc::{optimal_allocation, optimal_params_for_tokens, verify_allocation};
use lmscale::lawfit::{
    multi_epoch_runs, single_epoch_runs, ChinchillaParams, FitConfig, MultiEpochObjective, MultiEpochParams,
    SingleEpochObjective,
};
use lmscale::numopt::grad_check;
use lmscale::synthgen::{generate_runs, SynthLaw, SynthSpec};

use crate::args::CheckArgs;
use crate::commands::exact_power_law;
use crate::error::{CliError, Result};
use crate::output::{paint_stdout, GREEN, RED};

const GRAD_TOL: f64 = 1e-6;
const GRAD_STEP: f64 = 1e-6;
const CROSS_CHECK_TOL: f64 = 1e-3;
const CONSTRAINT_TOL: f64 = 1e-12;
const SEED: u64 = 0;

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn gradients_single(verbose: bool) -> Result<Outcome> {
    let spec = SynthSpec::new(SynthLaw::Single(ChinchillaParams::SPEECH), 0.01, SEED);
    let runs = generate_runs(&spec)?;
    let obj = SingleEpochObjective::new(
        single_epoch_runs(&runs)
            .iter()
            .map(|r| (r.n_params, r.d_tokens, r.test_loss)),
        FitConfig::default().huber_delta,
    );
    let grid = FitConfig::default().init_grid;
    let mut worst = (0.0f64, 0usize);
    for (i, x) in grid.points().enumerate() {
        let err = grad_check(&obj, &x, GRAD_STEP).map_err(|e| CliError::Numerical(e.to_string()))?;
        if verbose && err >= GRAD_TOL {
            println!("  single-epoch start {i} {x:?}: relative error {err:.2e}");
        }
        if err > worst.0 {
            worst = (err, i);
        }
    }
    Ok(Outcome {
        name: "single-epoch objective gradient",
        passed: worst.0 < GRAD_TOL,
        detail: format!(
            "{} starts, max relative error {:.2e} at start {}",
            grid.len(),
            worst.0,
            worst.1
        ),
    })
}

fn gradients_multi(verbose: bool) -> Result<Outcome> {
    let truth = MultiEpochParams::SPEECH;
    let runs = generate_runs(&SynthSpec::new(SynthLaw::Multi(truth), 0.01, SEED))?;
    let points: Vec<_> = multi_epoch_runs(&runs)
        .iter()
        .map(|r| {
            let u_n = optimal_params_for_tokens(&truth.base, r.u_tokens);
            (r.n_params, r.d_tokens, r.u_tokens, u_n, r.test_loss)
        })
        .collect();
    let obj = MultiEpochObjective::new(truth.base, points, FitConfig::default().huber_delta);
    let grid = FitConfig::default().decay_grid;
    let mut worst: f64 = 0.0;
    for &rn in &grid {
        for &rd in &grid {
            let err = grad_check(&obj, &[rn, rd], GRAD_STEP).map_err(|e| CliError::Numerical(e.to_string()))?;
            if verbose && err >= GRAD_TOL {
                println!("  multi-epoch start ({rn}, {rd}): relative error {err:.2e}");
            }
            worst = worst.max(err);
        }
    }
    Ok(Outcome {
        name: "multi-epoch objective gradient",
        passed: worst < GRAD_TOL,
        detail: format!("{} starts, max relative error {worst:.2e}", grid.len() * grid.len()),
    })
}

fn allocation(verbose: bool) -> Result<Outcome> {
    let sets = [
        ("speech", ChinchillaParams::SPEECH),
        ("text", ChinchillaParams::TEXT),
        ("speech-unigram", ChinchillaParams::SPEECH_UNIGRAM),
    ];
    let mut passed = true;
    let (mut worst_cross, mut worst_constraint) = (0.0f64, 0.0f64);
    for (name, params) in sets {
        for c in [1e18, 1e20, 1e22] {
            match verify_allocation(&params, c, CROSS_CHECK_TOL) {
                Ok(check) => {
                    worst_cross = worst_cross.max(check.relative_error);
                    if verbose {
                        println!(
                            "  {name} C={c:e}: N closed form {:.6e}, golden-section {:.6e}",
                            check.n_closed_form, check.n_numeric
                        );
                    }
                }
                Err(e) => {
                    passed = false;
                    println!("  {name} C={c:e}: {e}");
                }
            }
        }
        for exp in 16..=24 {
            worst_constraint = worst_constraint.max(optimal_allocation(&params, 10f64.powi(exp)).constraint_error());
        }
    }
    passed &= worst_constraint <= CONSTRAINT_TOL;
    Ok(Outcome {
        name: "compute-optimal allocation",
        passed,
        detail: format!("golden-section max difference {worst_cross:.1e}, max |6ND/C - 1| {worst_constraint:.1e}"),
    })
}

fn power_law() -> Result<Outcome> {
    let fit = exact_power_law(10.0, -0.05)?;
    let err = (fit.coefficient / 10.0 - 1.0).abs().max((fit.exponent + 0.05).abs());
    Ok(Outcome {
        name: "power-law regression",
        passed: err <= 1e-9,
        detail: format!("exact fixture recovered to {err:.1e}"),
    })
}

pub fn run(args: &CheckArgs) -> Result<()> {
    let outcomes = [
        gradients_single(args.verbose)?,
        gradients_multi(args.verbose)?,
        allocation(args.verbose)?,
        power_law()?,
    ];
    let mut failed = 0;
    for o in &outcomes {
        let tag = if o.passed {
            paint_stdout("ok  ", GREEN)
        } else {
            failed += 1;
            paint_stdout("FAIL", RED)
        };
        println!("{tag} {}: {}", o.name, o.detail);
    }
    if failed > 0 {
        return Err(CliError::Numerical(format!("{failed} self-checks failed")));
    }
    Ok(())
}
