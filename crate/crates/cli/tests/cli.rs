use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SPEECH: &str = r#"{"type":"single_epoch","E":1.73,"A":13.9,"B":39.8,"alpha":0.25,"beta":0.24}"#;
const SPEECH_MULTI: &str = r#"{"type":"multi_epoch","base":{"E":1.73,"A":13.9,"B":39.8,"alpha":0.25,"beta":0.24},"r_star_n":31.0,"r_star_d":25.0}"#;

fn lmscale(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmscale"))
        .args(args)
        .current_dir(dir)
        .env_remove("NO_COLOR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn field(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(key).filter(|rest| rest.starts_with(' ')))
        .and_then(|rest| rest.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| panic!("no {key} in {out}"))
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().to_path_buf();
    std::fs::write(path.join("speech.json"), SPEECH).unwrap();
    std::fs::write(path.join("speech_multi.json"), SPEECH_MULTI).unwrap();
    (dir, path)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn synth_runs(dir: &Path, law: &str, noise: &str, out: &str) {
    let o = lmscale(
        dir,
        &["synth", "--law", law, "--noise", noise, "--seed", "5", "--out", out],
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn allocate_matches_closed_form() {
    let (_g, dir) = setup();
    let o = lmscale(&dir, &["allocate", "--law", "speech.json", "--compute", "6e18"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    // Closed-form values from an arbitrary-precision evaluation.
    assert!((field(&out, "n_opt") / 83_200_025.514_045 - 1.0).abs() < 1e-9);
    assert!((field(&out, "d_opt") / 12_019_227_083.424_27 - 1.0).abs() < 1e-9);
    assert!(out.contains("OK"));
    assert!(!out.contains("FAIL"));
}

#[test]
fn compare_prints_table_three_ratio() {
    let (_g, dir) = setup();
    let o = lmscale(
        &dir,
        &[
            "compare",
            "--metric",
            "blimp",
            "--gamma-ref",
            "0.066",
            "--gamma-other",
            "0.021",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.lines().next().unwrap().starts_with("metric"));
    assert!(out.contains("blimp") && out.contains(" 3.14 "), "{out}");

    let o = lmscale(
        &dir,
        &["compare", "--gamma-ref", "0.046", "--gamma-other", "0.017", "--json"],
    );
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["ratio"].as_f64().unwrap() - 2.7).abs() < 0.01);
}

#[test]
fn compare_rejects_opposite_signs() {
    let (_g, dir) = setup();
    let o = lmscale(&dir, &["compare", "--gamma-ref", "0.05", "--gamma-other", "-0.02"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("opposite signs"));
}

#[test]
fn fit_single_writes_single_epoch_artifact() {
    let (_g, dir) = setup();
    synth_runs(&dir, "speech.json", "0", "runs.csv");
    let o = lmscale(
        &dir,
        &["fit", "--runs", "runs.csv", "--stage", "single", "--out", "law.json"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&dir.join("law.json"));
    assert_eq!(v["type"], "single_epoch");
    for (key, want) in [("E", 1.73), ("A", 13.9), ("B", 39.8), ("alpha", 0.25), ("beta", 0.24)] {
        assert!((v[key].as_f64().unwrap() / want - 1.0).abs() < 1e-3, "{key}");
    }
    let meta = &v["fit_meta"];
    assert_eq!(meta["huber_delta"], 0.03);
    assert_eq!(meta["n_runs_used"], 40);
    assert_eq!(meta["input_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(meta["config"]["stage"], "single");
}

#[test]
fn fit_multi_two_stage_and_with_base() {
    let (_g, dir) = setup();
    synth_runs(&dir, "speech_multi.json", "0", "runs.json");
    let o = lmscale(
        &dir,
        &["fit", "--runs", "runs.json", "--stage", "multi", "--out", "multi.json"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&dir.join("multi.json"));
    assert_eq!(v["type"], "multi_epoch");
    assert!((v["r_star_n"].as_f64().unwrap() / 31.0 - 1.0).abs() < 0.01);
    assert!((v["r_star_d"].as_f64().unwrap() / 25.0 - 1.0).abs() < 0.01);

    let o = lmscale(
        &dir,
        &[
            "fit",
            "--runs",
            "runs.json",
            "--stage",
            "multi",
            "--base",
            "speech.json",
            "--out",
            "m2.json",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(json(&dir.join("m2.json"))["fit_meta"]["config"]["base"], "speech.json");
}

#[test]
fn fit_with_curves_writes_envelope_law() {
    let (_g, dir) = setup();
    let o = lmscale(
        &dir,
        &[
            "synth",
            "--law",
            "speech.json",
            "--seed",
            "1",
            "--out",
            "runs.csv",
            "--curves-out",
            "curves.csv",
            "--checkpoints",
            "6",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = lmscale(
        &dir,
        &[
            "fit",
            "--runs",
            "runs.csv",
            "--curves",
            "curves.csv",
            "--stage",
            "single",
            "--out",
            "law.json",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let env = json(&dir.join("law.envelope.json"));
    assert_eq!(env["type"], "power_law");
    assert!(env["exponent"].as_f64().unwrap() < 0.0);
}

#[test]
fn fit_is_deterministic_and_thread_independent() {
    let (_g, dir) = setup();
    synth_runs(&dir, "speech.json", "0.01", "runs.csv");
    let args = |out: &'static str| ["fit", "--runs", "runs.csv", "--stage", "single", "--out", out];
    assert!(lmscale(&dir, &args("a.json")).status.success());
    assert!(lmscale(&dir, &args("b.json")).status.success());
    let a = std::fs::read(dir.join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(dir.join("b.json")).unwrap());

    let mut serial = args("s.json").to_vec();
    serial.push("--serial");
    assert!(lmscale(&dir, &serial).status.success());
    let (p, s) = (json(&dir.join("a.json")), json(&dir.join("s.json")));
    for key in ["E", "A", "B", "alpha", "beta"] {
        assert_eq!(
            p[key].as_f64().unwrap().to_bits(),
            s[key].as_f64().unwrap().to_bits(),
            "{key}"
        );
    }
    assert_eq!(p["fit_meta"]["objective"], s["fit_meta"]["objective"]);
    assert_eq!(p["fit_meta"]["winning_init"], s["fit_meta"]["winning_init"]);
}

#[test]
fn synth_is_deterministic_per_seed() {
    let (_g, dir) = setup();
    for out in ["a.csv", "b.csv"] {
        synth_runs(&dir, "speech_multi.json", "0.01", out);
    }
    let a = std::fs::read(dir.join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.join("b.csv")).unwrap());
    // 40 single-epoch runs plus 40 × 4 repeated-data runs, plus the header.
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 201);
}

#[test]
fn synth_options_and_errors() {
    let (_g, dir) = setup();
    let o = lmscale(
        &dir,
        &[
            "synth",
            "--law",
            "speech_multi.json",
            "--sizes",
            "1e8,2e8",
            "--ratios",
            "10,20,40",
            "--epochs",
            "2",
            "--seed",
            "0",
            "--out",
            "r.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("(12 runs)"));
    let o = lmscale(
        &dir,
        &[
            "synth",
            "--law",
            "speech.json",
            "--epochs",
            "2",
            "--seed",
            "0",
            "--out",
            "r.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    let o = lmscale(
        &dir,
        &[
            "synth",
            "--law",
            "speech.json",
            "--noise=-1",
            "--seed",
            "0",
            "--out",
            "r.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn predict_single_and_multi() {
    let (_g, dir) = setup();
    let o = lmscale(
        &dir,
        &["predict", "--law", "speech.json", "--n", "823e6", "--d", "10.89e9"],
    );
    assert_eq!(o.status.code(), Some(0));
    // Arbitrary-precision evaluation of the speech law at this point.
    assert!((field(&stdout(&o), "loss") - 1.967_303_705_090_932_4).abs() < 1e-12);

    // U_D = 1e9 tokens seen 4 times by the compute-optimal model for U_D.
    let o = lmscale(
        &dir,
        &[
            "predict",
            "--law",
            "speech_multi.json",
            "--n",
            "7646135.333074026",
            "--d",
            "4e9",
            "--u-d",
            "1e9",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!((field(&stdout(&o), "loss") - 2.193_859_786_105_179_6).abs() < 1e-9);

    let o = lmscale(
        &dir,
        &[
            "predict",
            "--law",
            "speech.json",
            "--n",
            "1e8",
            "--d",
            "4e9",
            "--u-d",
            "1e9",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    let o = lmscale(&dir, &["predict", "--law", "speech.json", "--n=-1", "--d", "4e9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invert_reaches_target() {
    let (_g, dir) = setup();
    let o = lmscale(&dir, &["invert", "--law", "speech.json", "--target-loss", "1.9673"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!((field(&out, "compute") / 3.765_286_612_699_033e19 - 1.0).abs() < 2e-6);
    assert!((field(&out, "loss") - 1.9673).abs() < 1e-6);
    let o = lmscale(&dir, &["invert", "--law", "speech.json", "--target-loss", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn envelope_emits_plot_and_law() {
    let (_g, dir) = setup();
    std::fs::write(
        dir.join("curves.csv"),
        "run_id,compute,loss,metric.acc\n\
         a,1e18,5,40\na,2e18,4,45\nb,2e18,6,41\nb,3e18,4.5,44\nc,1e19,3,60\n",
    )
    .unwrap();
    let o = lmscale(
        &dir,
        &[
            "envelope",
            "--curves",
            "curves.csv",
            "--y",
            "loss",
            "--out",
            "env.json",
            "--emit-plot",
            "env.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let plot = std::fs::read_to_string(dir.join("env.csv")).unwrap();
    let lines: Vec<&str> = plot.lines().collect();
    assert!(lines[0].starts_with('#') && lines[0].contains("log-log"));
    assert_eq!(lines[1], "compute,value");
    assert_eq!(&lines[2..], ["1e18,5", "2e18,4", "1e19,3"]);
    assert_eq!(json(&dir.join("env.json"))["n_points"], 3);

    let o = lmscale(
        &dir,
        &[
            "envelope",
            "--curves",
            "curves.csv",
            "--y",
            "metric:acc",
            "--out",
            "m.json",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(json(&dir.join("m.json"))["exponent"].as_f64().unwrap() > 0.0);

    let o = lmscale(
        &dir,
        &[
            "envelope",
            "--curves",
            "curves.csv",
            "--y",
            "accuracy",
            "--out",
            "x.json",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    let o = lmscale(
        &dir,
        &[
            "envelope",
            "--curves",
            "curves.csv",
            "--y",
            "metric:nope",
            "--out",
            "x.json",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn envelope_burn_in_drops_early_checkpoints() {
    let (_g, dir) = setup();
    std::fs::write(
        dir.join("curves.csv"),
        "run_id,compute,loss\na,1e15,2.5\na,1e17,4\na,1e18,3\nb,1e16,9\nb,1e19,2\n",
    )
    .unwrap();
    let o = lmscale(
        &dir,
        &[
            "envelope",
            "--curves",
            "curves.csv",
            "--out",
            "e.json",
            "--burn-in",
            "0.05",
            "--emit-plot",
            "p.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let plot = std::fs::read_to_string(dir.join("p.csv")).unwrap();
    assert_eq!(plot.lines().skip(2).collect::<Vec<_>>(), ["1e17,4", "1e18,3", "1e19,2"]);
}

#[test]
fn correlate_exact_line_and_filter() {
    let (_g, dir) = setup();
    std::fs::write(
        dir.join("runs.csv"),
        "run_id,n_params,d_tokens,test_loss,metric.acc\na,1e8,1e9,2.0,80\nb,1e8,2e9,2.1,78\nc,1e8,3e9,2.2,76\n",
    )
    .unwrap();
    let o = lmscale(
        &dir,
        &[
            "correlate",
            "--runs",
            "runs.csv",
            "--metric",
            "acc",
            "--out",
            "lin.json",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!((field(&out, "slope") + 20.0).abs() < 1e-9);
    assert!((field(&out, "intercept") - 120.0).abs() < 1e-9);
    assert!((field(&out, "pearson_r") + 1.0).abs() < 1e-12);
    assert_eq!(json(&dir.join("lin.json"))["type"], "linear");

    let o = lmscale(
        &dir,
        &[
            "correlate",
            "--runs",
            "runs.csv",
            "--metric",
            "acc",
            "--metric-cap",
            "77",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("got 1"));
}

#[test]
fn project_and_compare_from_artifacts() {
    let (_g, dir) = setup();
    let law = |k: f64, g: f64| {
        format!(
            r#"{{"type":"power_law","coefficient":{k},"exponent":{g},"r_squared":1.0,"domain":[1e18,1e22],"n_points":5}}"#
        )
    };
    std::fs::write(dir.join("text.json"), law(30.0, 0.066)).unwrap();
    std::fs::write(dir.join("speech_q.json"), law(30.0, 0.021)).unwrap();
    let o = lmscale(
        &dir,
        &[
            "compare",
            "--law-ref",
            "text.json",
            "--law-other",
            "speech_q.json",
            "--metric",
            "blimp",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains(" 3.14 "));

    let o = lmscale(
        &dir,
        &[
            "project",
            "--law-ref",
            "text.json",
            "--law-other",
            "speech_q.json",
            "--c-ref",
            "1e20",
            "--json",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    // Equal coefficients: C_other = c_ref^(γ_ref/γ_other).
    let want = (0.066f64 / 0.021 * 1e20f64.ln()).exp();
    assert!((v["c_other"].as_f64().unwrap() / want - 1.0).abs() < 1e-12);
    assert_eq!(v["other_extrapolated"], true);
    assert!(stderr(&o).contains("extrapolates"));

    let o = lmscale(
        &dir,
        &[
            "project",
            "--law-ref",
            "text.json",
            "--law-other",
            "speech.json",
            "--c-ref",
            "1e20",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_passes_without_color_codes() {
    let (_g, dir) = setup();
    let o = Command::new(env!("CARGO_BIN_EXE_lmscale"))
        .args(["check", "--verbose"])
        .current_dir(&dir)
        .env("NO_COLOR", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(!out.contains('\x1b'));
    assert_eq!(out.lines().filter(|l| l.starts_with("ok")).count(), 4);
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let (_g, dir) = setup();
    assert_eq!(lmscale(&dir, &["fit", "--bogus"]).status.code(), Some(1));
    assert_eq!(lmscale(&dir, &["nonsense"]).status.code(), Some(1));
    assert_eq!(lmscale(&dir, &[]).status.code(), Some(1));
    assert_eq!(
        lmscale(&dir, &["allocate", "--law", "speech.json", "--compute", "lots"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(lmscale(&dir, &["--help"]).status.code(), Some(0));
    assert_eq!(lmscale(&dir, &["--version"]).status.code(), Some(0));
    assert_eq!(lmscale(&dir, &["fit", "--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two() {
    let (_g, dir) = setup();
    let o = lmscale(&dir, &["allocate", "--law", "missing.json", "--compute", "1e20"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error:"));
    std::fs::write(
        dir.join("bad.csv"),
        "run_id,n_params,d_tokens,test_loss\na,1e8,1e9,-2\n",
    )
    .unwrap();
    let o = lmscale(
        &dir,
        &["fit", "--runs", "bad.csv", "--stage", "single", "--out", "x.json"],
    );
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(
        dir.join("few.csv"),
        "run_id,n_params,d_tokens,test_loss\na,1e8,1e9,2\nb,2e8,1e9,1.9\n",
    )
    .unwrap();
    let o = lmscale(
        &dir,
        &["fit", "--runs", "few.csv", "--stage", "single", "--out", "x.json"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.join("x.json").exists());
}

#[test]
fn numerical_failure_exits_three() {
    let (_g, dir) = setup();
    synth_runs(&dir, "speech.json", "0", "runs.csv");
    // Every start sits where the law overflows, so every start errors.
    let o = lmscale(
        &dir,
        &[
            "fit",
            "--runs",
            "runs.csv",
            "--stage",
            "single",
            "--out",
            "x.json",
            "--grid-log-e",
            "800",
            "--grid-log-a",
            "800",
            "--grid-log-b",
            "800",
            "--grid-alpha",
            "0.5",
            "--grid-beta",
            "0.5",
        ],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn config_file_fills_flags_and_flags_win() {
    let (_g, dir) = setup();
    synth_runs(&dir, "speech.json", "0", "runs.csv");
    std::fs::write(
        dir.join("cfg.json"),
        r#"{"huber-delta": 0.05, "fit": {"stage": "single", "runs": "runs.csv", "out": "from_config.json", "grid-alpha": [0.3, 0.5]}}"#,
    )
    .unwrap();
    let o = lmscale(&dir, &["fit", "--config", "cfg.json", "--out", "from_flag.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!dir.join("from_config.json").exists());
    let meta = &json(&dir.join("from_flag.json"))["fit_meta"];
    assert_eq!(meta["huber_delta"], 0.05);
    assert_eq!(meta["config"]["init_grid"]["alpha"], serde_json::json!([0.3, 0.5]));

    let o = lmscale(
        &dir,
        &[
            "fit",
            "--config",
            "cfg.json",
            "--huber-delta",
            "0.02",
            "--out",
            "f2.json",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(json(&dir.join("f2.json"))["fit_meta"]["huber_delta"], 0.02);

    std::fs::write(dir.join("bad_cfg.json"), r#"{"fit": {"no-such-flag": 1}}"#).unwrap();
    let o = lmscale(&dir, &["fit", "--config", "bad_cfg.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn artifact_survives_fit_then_predict() {
    let (_g, dir) = setup();
    synth_runs(&dir, "speech.json", "0.01", "runs.csv");
    assert!(lmscale(
        &dir,
        &["fit", "--runs", "runs.csv", "--stage", "single", "--out", "law.json"]
    )
    .status
    .success());
    let text = std::fs::read_to_string(dir.join("law.json")).unwrap();
    assert!(text
        .lines()
        .nth(1)
        .unwrap()
        .trim_start()
        .starts_with("\"type\": \"single_epoch\""));
    assert!(text.ends_with("}\n"));
    let o = lmscale(&dir, &["predict", "--law", "law.json", "--n", "1e8", "--d", "2e9"]);
    assert_eq!(o.status.code(), Some(0));
}
