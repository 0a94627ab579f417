use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use erkn::harness::{self, ExperimentConfig, CSV_HEADER};

fn erkn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_erkn")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write_config(dir: &Path, config: &ExperimentConfig) -> String {
    let path = dir.join("config.json");
    fs::write(&path, config.to_json()).unwrap();
    path.to_string_lossy().into_owned()
}

fn small(dir: &Path, t_end: f64) -> ExperimentConfig {
    ExperimentConfig {
        t_end,
        output_dir: dir.join("out"),
        ..ExperimentConfig::default()
    }
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER);
    lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn zero_horizon_writes_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(dir.path(), 0.0);
    harness::cmd_run(&config, false, &mut Vec::new()).unwrap();
    for name in ["ERKN1", "ERKN2", "ERKN3", "ERKN4"] {
        let r = rows(&config.output_dir.join(format!("{name}.csv")));
        assert_eq!(r.len(), 1);
        assert_eq!(r[0][0], 0.0);
        for col in [4, 5, 6, 10, 11, 12] {
            assert_eq!(r[0][col], 0.0, "{name} column {col}");
        }
    }
}

#[test]
fn linear_override_conserves_everything() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(dir.path(), 1000.0);
    harness::cmd_run(&config, true, &mut Vec::new()).unwrap();
    for name in ["ERKN1", "ERKN2", "ERKN3", "ERKN4"] {
        let r = rows(&config.output_dir.join(format!("{name}.csv")));
        assert_eq!(r.len(), 2001);
        for row in &r {
            for col in [4, 5, 6] {
                assert!(row[col].abs() <= 1e-10, "{name} t={} col {col}: {}", row[0], row[col]);
            }
        }
    }
}

#[test]
fn run_writes_four_csvs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        record_stride: 7,
        ..small(dir.path(), 100.0)
    };
    let cfg = write_config(dir.path(), &config);
    let o = erkn(&["run", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut names: Vec<String> = fs::read_dir(&config.output_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["ERKN1.csv", "ERKN2.csv", "ERKN3.csv", "ERKN4.csv", "summary.json"]
    );
    // steps 0, 7, ..., 196 and the final step 200
    let r = rows(&config.output_dir.join("ERKN4.csv"));
    assert_eq!(r.len(), 30);
    assert_eq!(r.last().unwrap()[0], 100.0);
    let summary: harness::RunSummary =
        serde_json::from_str(&fs::read_to_string(config.output_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.steps, 200);
    assert_eq!(summary.methods.len(), 4);
    assert!(summary.methods["ERKN4"].contains_key("mod_H"));
}

#[test]
fn csv_values_reload_losslessly() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(dir.path(), 5.0);
    let summary = harness::cmd_run(&config, false, &mut Vec::new()).unwrap();
    let r = rows(&config.output_dir.join("ERKN1.csv"));
    assert_eq!(r[0][1], summary.methods["ERKN1"]["H"].reference_value);
    let text = fs::read_to_string(config.output_dir.join("ERKN1.csv")).unwrap();
    for line in text.lines().skip(1) {
        for field in line.split(',') {
            let v: f64 = field.parse().unwrap();
            assert_eq!(harness::format_value(v), field);
        }
    }
}

#[test]
fn single_method_and_out_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(dir.path(), 10.0);
    let cfg = write_config(dir.path(), &config);
    let out = dir.path().join("elsewhere");
    let o = erkn(&[
        "run",
        "--config",
        &cfg,
        "--method",
        "erkn3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("ERKN3.csv").exists());
    assert!(!out.join("ERKN1.csv").exists());
    assert!(stdout(&o).contains("ERKN3: 20 steps"));
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut v: serde_json::Value = serde_json::from_str(&ExperimentConfig::default().to_json()).unwrap();
    v["horizon"] = serde_json::json!(3);
    fs::write(&path, v.to_string()).unwrap();
    let o = erkn(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("horizon"));

    let o = erkn(&["run", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = erkn(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn blow_up_maps_to_runtime_exit() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        m: 8,
        initial_name: "cosine".into(),
        ..small(dir.path(), 1000.0)
    };
    let problem = config.problem().unwrap();
    let mut state = config.initial_state(&problem).unwrap();
    // data far outside the small-amplitude regime
    for z in state.q.iter_mut() {
        *z *= 1e3;
    }
    let coeffs = harness::resolve_method("ERKN1").unwrap();
    let mut stepper = erkn::integrators::StepContext::new(&problem, &coeffs, 0.5).unwrap();
    let err = erkn::integrators::integrate(&state, &mut stepper, 2000, 1, |_, _, _| Ok(())).unwrap_err();
    assert!(matches!(err, erkn::Error::BlowUp { .. }));
    let h: harness::HarnessError = err.into();
    assert_eq!(h.exit_code(), 1);
}

#[test]
fn check_reports_table() {
    let o = erkn(&["check", "--method", "ERKN4"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for line in ["symmetric=true", "symplectic=true", "d1=1", "order=2"] {
        assert!(text.lines().any(|l| l == line), "{line} missing in\n{text}");
    }
    let text = stdout(&erkn(&["check", "--method", "ERKN1"]));
    assert!(text.contains("symmetric=false") && text.contains("symplectic=false"));
    let text = stdout(&erkn(&["check", "--method", "ERKN2"]));
    assert!(text.contains("order=1"));

    let o = erkn(&["check", "--method", "ERKN7"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ERKN1, ERKN2, ERKN3, ERKN4"));
}

#[test]
fn check_custom_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("coeffs.json");
    // the symmetric and symplectic method, written out by hand
    let spec = r#"{
        "name": "mine",
        "c1": 0.5,
        "b1": {"scale": 1.0, "factors": [{"atom": "cos", "arg": 0.5}]},
        "bbar1": {"scale": 0.5, "factors": [{"atom": "sinc", "arg": 0.5}]}
    }"#;
    fs::write(&path, spec).unwrap();
    let o = erkn(&["check", "--coeffs", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("method=mine") && text.contains("symplectic=true") && text.contains("symmetric=true"));

    fs::write(&path, spec.replace("\"c1\"", "\"c2\"")).unwrap();
    assert_eq!(
        erkn(&["check", "--coeffs", path.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn converge_linear_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(dir.path(), 1.0);
    let orders = harness::cmd_converge(&config, &[0.1, 0.05, 0.025], true, &mut Vec::new()).unwrap();
    assert!(orders.iter().all(|o| o.exact && o.order.is_none()));
    let text = fs::read_to_string(config.output_dir.join("converge.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 3);
}

#[test]
fn converge_needs_three_halvings() {
    let o = erkn(&["converge", "--h-list", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = erkn(&["converge", "--h-list", "0.1,0.05,0.02"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn converge_nonlinear_orders() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(dir.path(), 1.0);
    let orders = harness::cmd_converge(&config, &[0.1, 0.05, 0.025], false, &mut Vec::new()).unwrap();
    for o in &orders {
        let p = o.order.unwrap();
        let expected = if o.method == "ERKN2" { 1.0 } else { 2.0 };
        assert!((p - expected).abs() <= 0.2, "{}: {p}", o.method);
    }
}

#[test]
fn compose_verify_exit_codes() {
    let o = erkn(&["compose-verify", "--method", "ERKN4", "--n", "100"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("pass"));

    let dir = tempfile::tempdir().unwrap();
    let config = small(dir.path(), 1.0);
    let coeffs = harness::resolve_method("ERKN3").unwrap();
    let r = harness::cmd_compose_verify(&config, &coeffs, 1, &mut Vec::new()).unwrap();
    assert!(r.deviation <= 1e-13 && r.passed);

    let o = erkn(&["compose-verify", "--method", "ERKN2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("symmetric"));
}

#[test]
fn resonance_small_case() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        m: 2,
        initial_name: "cosine".into(),
        ..small(dir.path(), 1.0)
    };
    let report = harness::cmd_resonance(&config, 1, &mut Vec::new()).unwrap();
    let text = fs::read_to_string(config.output_dir.join("resonance.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "j,k_support,lhs,rhs,condition,pass");
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), report.rows.len());
    // 13 multi-indices on two modes with |k| <= 2, three j, minus k = +-<j>
    // for the two j inside the support
    let non_res = body.iter().filter(|l| l.contains(",non_resonance,")).count();
    assert_eq!(non_res, 35);
    assert_eq!(body.iter().filter(|l| l.contains(",numerical,")).count(), 3);
    assert!(body
        .iter()
        .filter(|l| l.contains(",pair,"))
        .all(|l| l.ends_with(",pair,")));
}

#[test]
fn resonance_flags_sine_zero() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        m: 4,
        rho: 1.0,
        h: std::f64::consts::PI,
        t_end: 0.0,
        ..small(dir.path(), 0.0)
    };
    harness::cmd_resonance(&config, 1, &mut Vec::new()).unwrap();
    let text = fs::read_to_string(config.output_dir.join("resonance.csv")).unwrap();
    let row = text
        .lines()
        .find(|l| l.starts_with("0,0,") && l.contains(",numerical,"))
        .unwrap();
    assert!(row.ends_with(",false"), "{row}");
}

#[test]
fn resonance_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(dir.path(), 1.0);
    let cfg = write_config(dir.path(), &config);
    let run = || {
        let o = erkn(&["resonance", "--config", &cfg, "--truncation", "2"]);
        assert!(o.status.success(), "{}", stderr(&o));
        (stdout(&o), fs::read(config.output_dir.join("resonance.csv")).unwrap())
    };
    assert_eq!(run(), run());
    assert_eq!(erkn(&["resonance", "--truncation", "4"]).status.code(), Some(2));
}
