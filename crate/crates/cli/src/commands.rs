use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;
use sha2::{Digest, Sha256};

use lmscale::alloc::{compute_for_loss, optimal_allocation, optimal_params_for_tokens, verify_allocation};
use lmscale::artifact::{FitMeta, Law, LawArtifact};
use lmscale::lawfit::{fit_multi_epoch, fit_single_epoch, predict_loss, predict_loss_multi, FitConfig, FitReport};
use lmscale::linkage::{efficiency_ratio, exponent_ratio, loss_metric_correlation, project_parity, SaturationFilter};
use lmscale::runstore::{load_curves, load_runs, CurveSet, Format};
use lmscale::scalecurves::{envelope_for, fit_power_law, loss_compute_law, metric_compute_law, PowerLawFit};
use lmscale::synthgen::{generate_curves, generate_runs, SynthLaw, SynthSpec};

use crate::args::{
    AllocateArgs, CompareArgs, CorrelateArgs, EnvelopeArgs, FitArgs, InvertArgs, PredictArgs, ProjectArgs, Stage,
    SynthArgs,
};
use crate::error::{io_error, CliError, Result};
use crate::output::{num, print_fields, print_table, warn};

/// Relative tolerance on `6·N_opt·D_opt = C`.
const CONSTRAINT_TOL: f64 = 1e-12;
/// Relative tolerance of the golden-section cross-check.
const CROSS_CHECK_TOL: f64 = 1e-3;

fn tool_version() -> String {
    format!("lmscale {}", env!("CARGO_PKG_VERSION"))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::Data(format!("--{name} must be finite and > 0, got {v}")))
    }
}

fn fit_config(args: &FitArgs) -> FitConfig {
    let mut c = FitConfig::default();
    if let Some(d) = args.huber_delta {
        c.huber_delta = d;
    }
    let grid = &mut c.init_grid;
    for (field, value) in [
        (&mut grid.log_e, &args.grid_log_e),
        (&mut grid.log_a, &args.grid_log_a),
        (&mut grid.log_b, &args.grid_log_b),
        (&mut grid.alpha, &args.grid_alpha),
        (&mut grid.beta, &args.grid_beta),
    ] {
        if let Some(v) = value {
            field.clone_from(v);
        }
    }
    if let Some(v) = &args.decay_grid {
        c.decay_grid.clone_from(v);
    }
    if let Some(t) = args.grad_tol {
        c.opt.grad_tol = t;
    }
    if let Some(m) = args.max_iters {
        c.opt.max_iters = m;
    }
    c.parallel = !args.serial;
    c
}

fn meta_from_report<P>(
    report: &FitReport<P>,
    config: &FitConfig,
    extra: serde_json::Value,
    args: &FitArgs,
) -> Result<FitMeta> {
    let mut cfg = serde_json::to_value(config).map_err(|e| CliError::Data(e.to_string()))?;
    if let (Some(obj), serde_json::Value::Object(more)) = (cfg.as_object_mut(), extra) {
        obj.extend(more);
    }
    Ok(FitMeta {
        tool_version: Some(tool_version()),
        input_path: Some(args.runs.display().to_string()),
        input_sha256: Some(sha256_file(&args.runs)?),
        huber_delta: Some(config.huber_delta),
        objective: Some(report.objective),
        n_runs_used: Some(report.n_runs_used),
        winning_init: Some(report.winning_init),
        converged: Some(report.converged),
        config: Some(cfg),
    })
}

fn warn_unconverged<P>(report: &FitReport<P>) {
    if !report.converged {
        warn(&format!(
            "best start (grid index {}) stopped before reaching the gradient tolerance",
            report.winning_init
        ));
    }
    if report.failed_starts > 0 {
        warn(&format!(
            "{} starts failed with non-finite values",
            report.failed_starts
        ));
    }
}

/// `law.json` → `law.envelope.json`.
fn envelope_path(out: &Path) -> PathBuf {
    out.with_extension("envelope.json")
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let runs = load_runs(&args.runs, Format::from_path(&args.runs))?;
    let config = fit_config(args);
    config.validate()?;
    let (artifact, fields) = match args.stage {
        Stage::Single => {
            let report = fit_single_epoch(&runs, &config)?;
            warn_unconverged(&report);
            let p = report.params;
            let meta = meta_from_report(&report, &config, json!({"stage": "single"}), args)?;
            let fields = vec![
                ("E", num(p.e)),
                ("A", num(p.a)),
                ("B", num(p.b)),
                ("alpha", num(p.alpha)),
                ("beta", num(p.beta)),
                ("objective", num(report.objective)),
                ("runs used", report.n_runs_used.to_string()),
            ];
            (LawArtifact::with_meta(Law::SingleEpoch(p), meta), fields)
        }
        Stage::Multi => {
            let (base, base_source) = match &args.base {
                Some(path) => (LawArtifact::load(path)?.chinchilla()?, path.display().to_string()),
                None => {
                    let stage_one = fit_single_epoch(&runs, &config)?;
                    warn_unconverged(&stage_one);
                    (stage_one.params, "fitted on the same runs".to_string())
                }
            };
            let report = fit_multi_epoch(&runs, &base, &config)?;
            warn_unconverged(&report);
            let p = report.params;
            let meta = meta_from_report(&report, &config, json!({"stage": "multi", "base": base_source}), args)?;
            let fields = vec![
                ("R*_N", num(p.r_star_n)),
                ("R*_D", num(p.r_star_d)),
                ("objective", num(report.objective)),
                ("runs used", report.n_runs_used.to_string()),
                ("base", base_source),
            ];
            (LawArtifact::with_meta(Law::MultiEpoch(p), meta), fields)
        }
    };
    artifact.save(&args.out)?;
    print_fields(&fields);
    println!("wrote {} ({})", args.out.display(), artifact.law.type_name());

    if let Some(curves_path) = &args.curves {
        let curves = load_curves(curves_path, Format::from_path(curves_path))?;
        let fit = loss_compute_law(&curves)?;
        let meta = FitMeta {
            tool_version: Some(tool_version()),
            input_path: Some(curves_path.display().to_string()),
            input_sha256: Some(sha256_file(curves_path)?),
            n_runs_used: Some(curves.run_ids().len()),
            config: Some(json!({"y": "loss"})),
            ..FitMeta::default()
        };
        let path = envelope_path(&args.out);
        LawArtifact::with_meta(Law::PowerLaw(fit), meta).save(&path)?;
        print_fields(&[
            ("envelope k", num(fit.coefficient)),
            ("envelope gamma", num(fit.exponent)),
        ]);
        println!("wrote {} (power_law)", path.display());
    }
    Ok(())
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    positive("n", args.n)?;
    positive("d", args.d)?;
    let artifact = LawArtifact::load(&args.law)?;
    let loss = match (&artifact.law, args.u_d) {
        (Law::MultiEpoch(p), u_d) => {
            let u_d = u_d.unwrap_or(args.d);
            positive("u-d", u_d)?;
            let u_n = optimal_params_for_tokens(&p.base, u_d);
            predict_loss_multi(p, args.n, args.d, u_d, u_n)?
        }
        (Law::SingleEpoch(p), None) => predict_loss(p, args.n, args.d),
        (Law::SingleEpoch(p), Some(u_d)) if u_d == args.d => predict_loss(p, args.n, args.d),
        (Law::SingleEpoch(_), Some(_)) => {
            return Err(CliError::Data(
                "--u-d needs a multi_epoch law; a single_epoch law has no repetition terms".into(),
            ))
        }
        (other, _) => {
            return Err(CliError::Data(format!(
                "predict needs a loss law, got {}",
                other.type_name()
            )));
        }
    };
    print_fields(&[("loss", num(loss)), ("compute", num(6.0 * args.n * args.d))]);
    Ok(())
}

fn print_allocation(params: &lmscale::ChinchillaParams, compute: f64) -> Result<()> {
    let alloc = optimal_allocation(params, compute);
    let err = alloc.constraint_error();
    let check = verify_allocation(params, compute, CROSS_CHECK_TOL)?;
    print_fields(&[
        ("compute", num(compute)),
        ("n_opt", num(alloc.n_opt)),
        ("d_opt", num(alloc.d_opt)),
        ("loss", num(alloc.predicted_loss)),
        (
            "constraint",
            format!(
                "|6ND/C - 1| = {err:.1e} {}",
                if err <= CONSTRAINT_TOL { "OK" } else { "FAIL" }
            ),
        ),
        (
            "cross-check",
            format!("golden-section N differs by {:.1e} OK", check.relative_error),
        ),
    ]);
    if err > CONSTRAINT_TOL {
        return Err(CliError::Numerical(format!("6ND deviates from C by {err:e}")));
    }
    Ok(())
}

pub fn allocate(args: &AllocateArgs) -> Result<()> {
    positive("compute", args.compute)?;
    let params = LawArtifact::load(&args.law)?.chinchilla()?;
    print_allocation(&params, args.compute)
}

pub fn invert(args: &InvertArgs) -> Result<()> {
    let params = LawArtifact::load(&args.law)?.chinchilla()?;
    let compute = compute_for_loss(&params, args.target_loss)?;
    print_fields(&[("target loss", num(args.target_loss))]);
    print_allocation(&params, compute)
}

enum YAxis {
    Loss,
    Metric(String),
}

fn parse_y(y: &str) -> Result<YAxis> {
    if y == "loss" {
        return Ok(YAxis::Loss);
    }
    match y.strip_prefix("metric:") {
        Some(name) if !name.is_empty() => Ok(YAxis::Metric(name.to_string())),
        _ => Err(CliError::Usage(format!(
            "--y must be `loss` or `metric:<name>`, got {y:?}"
        ))),
    }
}

fn write_plot(path: &Path, y_name: &str, points: &[(f64, f64)]) -> Result<()> {
    let mut out = format!("# x=compute y={y_name} scale=log-log\ncompute,value\n");
    for &(c, v) in points {
        out.push_str(&format!("{},{}\n", num(c), num(v)));
    }
    fs::write(path, out).map_err(|e| io_error(path, e))
}

pub fn envelope(args: &EnvelopeArgs) -> Result<()> {
    let y = parse_y(&args.y)?;
    let (source, curves) = match (&args.curves, &args.runs) {
        (Some(p), _) => (p, load_curves(p, Format::from_path(p))?),
        (None, Some(p)) => (p, CurveSet::from_runs(&load_runs(p, Format::from_path(p))?)),
        (None, None) => return Err(CliError::Usage("one of --curves or --runs is required".into())),
    };
    let curves = match args.burn_in {
        None => curves,
        Some(f) if (0.0..=1.0).contains(&f) => curves
            .burn_in(f)
            .ok_or_else(|| CliError::Data(format!("--burn-in {f} removed every checkpoint")))?,
        Some(f) => return Err(CliError::Data(format!("--burn-in must lie in [0, 1], got {f}"))),
    };
    let (fit, points, y_name) = match &y {
        YAxis::Loss => (
            loss_compute_law(&curves)?,
            envelope_for(&curves, None)?,
            "loss".to_string(),
        ),
        YAxis::Metric(m) => (
            metric_compute_law(&curves, m)?,
            envelope_for(&curves, Some(m))?,
            m.clone(),
        ),
    };
    let meta = FitMeta {
        tool_version: Some(tool_version()),
        input_path: Some(source.display().to_string()),
        input_sha256: Some(sha256_file(source)?),
        n_runs_used: Some(curves.run_ids().len()),
        config: Some(json!({"y": args.y, "burn_in": args.burn_in})),
        ..FitMeta::default()
    };
    LawArtifact::with_meta(Law::PowerLaw(fit), meta).save(&args.out)?;
    print_law(&fit, points.len());
    if let Some(plot) = &args.emit_plot {
        write_plot(plot, &y_name, &points)?;
        println!("wrote {}", plot.display());
    }
    println!("wrote {} (power_law)", args.out.display());
    Ok(())
}

fn print_law(fit: &PowerLawFit, envelope_points: usize) {
    print_fields(&[
        ("coefficient", num(fit.coefficient)),
        ("exponent", num(fit.exponent)),
        ("r_squared", num(fit.r_squared)),
        ("domain", format!("[{}, {}]", num(fit.domain[0]), num(fit.domain[1]))),
        ("envelope points", envelope_points.to_string()),
    ]);
}

pub fn correlate(args: &CorrelateArgs) -> Result<()> {
    let runs = load_runs(&args.runs, Format::from_path(&args.runs))?;
    let filter = SaturationFilter {
        metric_cap: args.metric_cap,
        loss_min: args.loss_min,
    };
    let fit = loss_metric_correlation(&runs, &args.metric, filter)?;
    print_fields(&[
        ("metric", args.metric.clone()),
        ("slope", num(fit.slope)),
        ("intercept", num(fit.intercept)),
        ("pearson_r", num(fit.pearson_r)),
        ("points", fit.n_points.to_string()),
        ("filter", fit.filter_applied.clone()),
    ]);
    if let Some(out) = &args.out {
        let meta = FitMeta {
            tool_version: Some(tool_version()),
            input_path: Some(args.runs.display().to_string()),
            input_sha256: Some(sha256_file(&args.runs)?),
            n_runs_used: Some(fit.n_points),
            config: Some(json!({"metric": args.metric, "metric_cap": args.metric_cap, "loss_min": args.loss_min})),
            ..FitMeta::default()
        };
        LawArtifact::with_meta(Law::Linear(fit), meta).save(out)?;
        println!("wrote {} (linear)", out.display());
    }
    Ok(())
}

pub fn compare(args: &CompareArgs) -> Result<()> {
    let report = match (&args.law_ref, &args.law_other, args.gamma_ref, args.gamma_other) {
        (Some(r), Some(o), _, _) => {
            let (r, o) = (LawArtifact::load(r)?.power_law()?, LawArtifact::load(o)?.power_law()?);
            efficiency_ratio(&r, &o, &args.metric)?
        }
        (_, _, Some(r), Some(o)) => exponent_ratio(r, o, &args.metric)?,
        _ => {
            return Err(CliError::Usage(
                "give --law-ref and --law-other, or --gamma-ref and --gamma-other".into(),
            ))
        }
    };
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(|e| CliError::Data(e.to_string()))?
        );
        return Ok(());
    }
    print_table(
        &["metric", "gamma_ref", "gamma_other", "ratio", "10^ratio"],
        &[vec![
            report.metric.clone(),
            num(report.gamma_ref),
            num(report.gamma_other),
            format!("{:.2}", report.ratio),
            format!("{:.4}", report.compute_multiplier),
        ]],
    );
    Ok(())
}

pub fn project(args: &ProjectArgs) -> Result<()> {
    let fit_ref = LawArtifact::load(&args.law_ref)?.power_law()?;
    let fit_other = LawArtifact::load(&args.law_other)?.power_law()?;
    let p = project_parity(&fit_ref, &fit_other, args.c_ref)?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&p).map_err(|e| CliError::Data(e.to_string()))?
        );
    } else {
        let flag = |out: bool| if out { "extrapolated" } else { "within fitted domain" };
        print_fields(&[
            ("c_ref", format!("{}  ({})", num(p.c_ref), flag(p.ref_extrapolated))),
            ("target value", num(p.target_value)),
            (
                "c_other",
                format!("{}  ({})", num(p.c_other), flag(p.other_extrapolated)),
            ),
        ]);
    }
    if p.ref_extrapolated || p.other_extrapolated {
        warn("projection extrapolates beyond a fitted domain");
    }
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let law = match LawArtifact::load(&args.law)?.law {
        Law::SingleEpoch(p) => SynthLaw::Single(p),
        Law::MultiEpoch(p) => SynthLaw::Multi(p),
        other => {
            return Err(CliError::Data(format!(
                "synth needs a loss law, got {}",
                other.type_name()
            )));
        }
    };
    let mut spec = SynthSpec::new(law, args.noise, args.seed);
    if let Some(s) = &args.sizes {
        spec.sizes.clone_from(s);
    }
    if let Some(r) = &args.ratios {
        spec.ratios.clone_from(r);
    }
    if let Some(e) = &args.epochs {
        if matches!(law, SynthLaw::Single(_)) {
            return Err(CliError::Data("--epochs needs a multi_epoch law".into()));
        }
        spec.epoch_grid.clone_from(e);
    }
    let runs = generate_runs(&spec)?;
    runs.save(&args.out, Format::from_path(&args.out))?;
    println!("wrote {} ({} runs)", args.out.display(), runs.len());
    if let (Some(path), Some(k)) = (&args.curves_out, args.checkpoints) {
        let curves = generate_curves(&spec, k)?;
        curves.save(path, Format::from_path(path))?;
        println!("wrote {} ({} checkpoints)", path.display(), curves.len());
    }
    std::io::stdout().flush().ok();
    Ok(())
}

/// Used by `check` and tests: a power law fitted to an exact fixture.
pub fn exact_power_law(k: f64, gamma: f64) -> Result<PowerLawFit> {
    let pts: Vec<(f64, f64)> = [1e18, 1e20, 1e22]
        .iter()
        .map(|&c: &f64| (c, k * c.powf(gamma)))
        .collect();
    Ok(fit_power_law(&pts)?)
}
