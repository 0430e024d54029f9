//! End-to-end tests of the command-line interface, driving the real binary.

use std::path::Path;
use std::process::{Command, Output};

fn coxtail() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coxtail"))
}

fn run(args: &[&str]) -> Output {
    coxtail().args(args).output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn write_fixture(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("data.csv");
    let mut rows = String::from("time,status,z1\n");
    // deterministic heavy-tailed fixture with some censoring
    let mut state = 0x1234_5678_9ABC_DEFu64;
    let mut unif = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        ((state >> 11) as f64 / (1u64 << 53) as f64).max(1e-12)
    };
    for i in 0..80 {
        let z = 2.0 * unif() - 1.0;
        let x = unif().powf(-1.0);
        let c = unif().powf(-1.5);
        let t = x.min(c);
        let d = u8::from(x <= c);
        let _ = i;
        rows.push_str(&format!("{t},{d},{z}\n"));
    }
    std::fs::write(&path, rows).unwrap();
    path
}

fn model_value(path: &Path) -> serde_json::Value {
    let file: serde_json::Value =
        serde_json::from_reader(std::fs::File::open(path).unwrap()).unwrap();
    file["model"].clone()
}

#[test]
fn fit_na_and_predict_survival() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path());
    let model = dir.path().join("na.json");

    let out = run(&["fit", data.to_str().unwrap(), "--method", "na", "--beta", "0.4", "--out", model.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let value = model_value(&model);
    assert_eq!(value["type"], "nelson_aalen");
    assert!(value.get("tail").is_none());

    let out = run(&["predict", model.to_str().unwrap(), "--survival-at", "2.0", "--z", "0"]);
    assert!(out.status.success());
    let s: f64 = stdout(&out).trim().parse().unwrap();
    assert!(s > 0.0 && s < 1.0);

    // deep quantile unreachable on the flat step curve -> NA
    let out = run(&["predict", model.to_str().unwrap(), "--quantile", "0.0001"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "NA");
}

#[test]
fn fit_fixed_snaps_threshold_up() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    std::fs::write(&data, "time,status,z1\n1,1,0\n2,1,0.5\n7,1,-0.5\n12,1,0\n20,1,0.2\n").unwrap();
    let model = dir.path().join("fixed.json");

    let out = run(&["fit", data.to_str().unwrap(), "--method", "fixed:10", "--beta", "0.5", "--out", model.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("snapped tau=12"));
    let value = model_value(&model);
    assert_eq!(value["model"]["tail"]["tau"], 12.0);

    // fixed threshold beyond all observations is a selection error (exit 5)
    let out = run(&["fit", data.to_str().unwrap(), "--method", "fixed:100", "--beta", "0.5", "--out", model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn fit_adaptive_is_reproducible_and_quantile_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path());
    let first = dir.path().join("a.json");
    let second = dir.path().join("b.json");

    for out_path in [&first, &second] {
        let out = run(&[
            "fit", data.to_str().unwrap(),
            "--method", "adaptive",
            "--critical-value", "9.5",
            "--out", out_path.to_str().unwrap(),
            "--curve", dir.path().join("curve.csv").to_str().unwrap(),
            "--grid", "0.5:50:40:log",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(stdout(&out).contains("selected tau="));
    }
    // byte-for-byte apart from the manifest: compare the model sections
    assert_eq!(model_value(&first), model_value(&second));

    let curve = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 41);
    assert!(std::fs::metadata(dir.path().join("a.json.manifest.json")).is_err());

    // quantile then survival roundtrip through the CLI
    let out = run(&["predict", first.to_str().unwrap(), "--quantile", "0.05", "--z", "0.3"]);
    assert!(out.status.success());
    let x: f64 = stdout(&out).trim().parse().unwrap();
    let out = run(&["predict", first.to_str().unwrap(), "--survival-at", &format!("{x}"), "--z", "0.3"]);
    let p: f64 = stdout(&out).trim().parse().unwrap();
    assert!((p - 0.05).abs() < 1e-9, "roundtrip p = {p}");
}

#[test]
fn predict_batch_mode() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path());
    let model = dir.path().join("m.json");
    assert!(run(&["fit", data.to_str().unwrap(), "--method", "adaptive", "--critical-value", "9.5", "--out", model.to_str().unwrap()]).status.success());

    let batch = dir.path().join("batch.csv");
    std::fs::write(&batch, "z1,x\n0,1\n0.5,10\n-0.5,100\n").unwrap();
    let out = run(&["predict", model.to_str().unwrap(), "--batch", batch.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("z1,x,survival"));
}

#[test]
fn select_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path());
    let report = dir.path().join("sel.json");
    let out = run(&["select", data.to_str().unwrap(), "--beta", "0.4", "--critical-value", "9.5", "--out", report.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("tau_hat="));
    let value: serde_json::Value = serde_json::from_reader(std::fs::File::open(&report).unwrap()).unwrap();
    assert!(value["selection"]["profile"].as_array().unwrap().len() > 1);
    assert!(value["selection"]["theta_hat"].as_f64().unwrap() > 0.0);
    assert_eq!(value["manifest"]["command"], "select");
}

#[test]
fn aggregate_simple_and_adaptive() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path());
    for (method, extra) in [("simple", vec!["--m0-frac", "0.06"]), ("adaptive", vec!["--critical-value", "9.5"])] {
        let model = dir.path().join(format!("{method}.json"));
        let mut args = vec!["aggregate", data.to_str().unwrap(), "--method", method, "--m", "4", "--beta", "0.4", "--out", model.to_str().unwrap()];
        args.extend(extra);
        let out = run(&args);
        assert!(out.status.success(), "{method}: {}", String::from_utf8_lossy(&out.stderr));
        let value = model_value(&model);
        assert_eq!(value["type"], "aggregate");
        let components = value["model"]["components"].as_array().unwrap();
        assert_eq!(components.len(), 4);
        let total: f64 = components.iter().map(|c| c["weight"].as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn calibrate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = run(&["calibrate", "--n", "60", "--quantile", "0.99", "--n-mc", "200", "--seed", "7", "--out", path.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(stdout(&out).starts_with("critical_value="));
    }
    let read = |p: &Path| -> f64 {
        let v: serde_json::Value = serde_json::from_reader(std::fs::File::open(p).unwrap()).unwrap();
        v["critical_value"].as_f64().unwrap()
    };
    assert_eq!(read(&a), read(&b));
    assert!(std::fs::metadata(dir.path().join("a.json.manifest.json")).is_ok());

    // the calibrate output feeds --critical-value by path
    let data = write_fixture(dir.path());
    let model = dir.path().join("m.json");
    let out = run(&["fit", data.to_str().unwrap(), "--method", "adaptive", "--critical-value", a.to_str().unwrap(), "--out", model.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_runs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        serde_json::json!({
            "n": 80,
            "n_mc": 4,
            "beta": [-0.5],
            "failure_baseline": {"kind": "truncated_cauchy", "x0": 0.0, "gamma": 1.0},
            "censoring_law": {"kind": "truncated_cauchy", "x0": 0.0, "gamma": 2.0},
            "eval_points": [100.0, 500.0],
            "seed": 3,
            "m": 4,
            "m0": {"kind": "fraction", "fraction": 0.06},
            "selection": {"n_grid": 100, "zeta_prime": 0.25, "zeta_second": 0.05, "critical_value": 9.5}
        })
        .to_string(),
    )
    .unwrap();
    let out_dir = dir.path().join("runs");
    let out = run(&["simulate", config.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap(), "--threads", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("mean_censoring_rate="));
    let report: serde_json::Value =
        serde_json::from_reader(std::fs::File::open(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["estimators"].as_array().unwrap().len(), 4);
    let csv = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 2);

    // schema violation -> data error exit
    std::fs::write(&config, "{\"n\": 80}").unwrap();
    let out = run(&["simulate", config.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let out_model = dir.path().join("m.json");

    // usage error: unknown flag
    let out = run(&["fit", "--definitely-not-a-flag"]);
    assert_eq!(out.status.code(), Some(2));

    // data error: missing file
    let out = run(&["fit", "/nonexistent.csv", "--method", "na", "--out", out_model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    // data error: malformed rows
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "time,status\n-3,1\n").unwrap();
    let out = run(&["fit", bad.to_str().unwrap(), "--method", "na", "--out", out_model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    // numeric error: collinear covariates with estimated beta
    let collinear = dir.path().join("collinear.csv");
    std::fs::write(&collinear, "time,status,z1,z2\n1,1,1,1\n2,1,2,2\n3,1,3,3\n4,0,1,1\n5,1,2,2\n").unwrap();
    let out = run(&["fit", collinear.to_str().unwrap(), "--method", "na", "--out", out_model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));

    // selection error: adaptive fit with a single event
    let sparse = dir.path().join("sparse.csv");
    std::fs::write(&sparse, "time,status\n1,0\n2,0\n3,1\n4,0\n5,0\n").unwrap();
    let out = run(&["select", sparse.to_str().unwrap(), "--critical-value", "5", "--out", out_model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
}
