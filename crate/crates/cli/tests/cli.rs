use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use entangleometer_cli::error::{EXIT_CONFIG, EXIT_DEGENERATE, EXIT_NONCONVERGENCE, EXIT_OK};
use entangleometer_cli::table1::run_table1;
use entangleometer_cli::Table1Bundle;
use serde_json::Value;
use tempfile::TempDir;

const IDEAL: &str = r#"{"pair_rate": 10000.0, "efficiency_signal": 1.0, "efficiency_idler": 1.0,
    "dark_rate_signal": 0.0, "dark_rate_idler": 0.0, "coincidence_window": 0.0, "integration_time": 1.0}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entangleometer"))
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn error_kind(o: &Output) -> String {
    let v: Value = serde_json::from_slice(&o.stderr).unwrap();
    v["error"]["kind"].as_str().unwrap().to_string()
}

fn senarmont_config(dir: &TempDir, sampling: &str, delta: f64) -> PathBuf {
    write(
        dir,
        "senarmont.json",
        &format!(
            r#"{{"mode": "quantum", "compensator": true,
                "sample": {{"axis_deg": 45.0, "retardance_rad": {delta}}},
                "sweep": {{"fixed_deg": 0.0, "points": 36}},
                "sampling": "{sampling}", "detection": {IDEAL}, "seed": 4}}"#
        ),
    )
}

#[test]
fn senarmont_noise_free_csv_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let cfg = senarmont_config(&dir, "expected", FRAC_PI_2);
    let out = dir.path().join("out");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));

    let csv = std::fs::read_to_string(out.join("runs/run_0000.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("angle_rad,counts,integration_s"));
    let mut n = 0;
    for line in lines {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let expected = 1e4 * 0.5 * (FRAC_PI_4 - 2.0 * f[0]).sin().powi(2);
        assert!((f[1] - expected).abs() <= 1e-9, "h={} counts={} expected={expected}", f[0], f[1]);
        n += 1;
    }
    assert_eq!(n, 36);
    let sidecar = read_json(&out.join("runs/run_0000.json"));
    assert!(sidecar.get("config_hash").is_some() || sidecar.to_string().contains("config_hash"));
}

#[test]
fn same_seed_gives_identical_output() {
    let dir = TempDir::new().unwrap();
    let cfg = senarmont_config(&dir, "poisson", 1.56);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        assert_eq!(code(&run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])), EXIT_OK);
    }
    assert_eq!(code(&run(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "5", "--out", c.to_str().unwrap()])), EXIT_OK);
    let read = |d: &Path| std::fs::read(d.join("runs/run_0000.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn fit_recovers_noise_free_retardance_from_data_file() {
    let dir = TempDir::new().unwrap();
    let cfg = senarmont_config(&dir, "expected", 1.56);
    let sim = dir.path().join("sim");
    assert_eq!(code(&run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", sim.to_str().unwrap()])), EXIT_OK);
    let fit = dir.path().join("fit");
    let data = sim.join("runs/run_0000.csv");
    let o = run(&["fit", "--config", cfg.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", fit.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&fit.join("fit_report.json"));
    let delta = report["runs"][0]["fit"]["delta_hat"].as_f64().unwrap();
    assert!((delta - 1.56).abs() < 1e-9, "{delta}");
    assert!(fit.join("fit_curve.csv").exists());
}

#[test]
fn sensitivity_fields_are_reported() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "hwp.json",
        r#"{"mode": "quantum", "sample": {"axis_deg": 22.5, "retardance_rad": 3.1341},
            "sweep": {"fixed_deg": 0.0}, "seed": 1}"#,
    );
    let out = dir.path().join("out");
    let o = run(&["fit", "--config", cfg.to_str().unwrap(), "--sensitivity", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.join("fit_report.json"));
    let s = &report["runs"][0]["sensitivity"];
    for key in ["scale_factors", "delta_hats", "spread", "threshold", "dependent", "free_refit_spread"] {
        assert!(!s[key].is_null(), "missing {key}");
    }
    assert_eq!(s["delta_hats"].as_array().unwrap().len(), 5);
    assert_eq!(s["dependent"], Value::Bool(true));
}

#[test]
fn excluded_sweep_is_a_config_error_and_degenerate_when_overridden() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "excluded.json",
        r#"{"mode": "quantum", "sample": {"axis_deg": 90.0, "retardance_rad": 1.0},
            "sweep": {"fixed_deg": 0.0}, "sampling": "expected", "seed": 0}"#,
    );
    let out = dir.path().join("out");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_CONFIG);
    assert!(!out.exists());

    let o = run(&["fit", "--config", cfg.to_str().unwrap(), "--override-validity", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_DEGENERATE);
    assert_eq!(error_kind(&o), "degenerate_sweep");
}

#[test]
fn iteration_cap_reports_nonconvergence() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "capped.json",
        r#"{"mode": "quantum", "compensator": true, "sample": {"axis_deg": 30.0, "retardance_rad": 2.3},
            "sweep": {"fixed_deg": 10.0}, "fit": {"max_iterations": 1}, "seed": 2}"#,
    );
    let o = run(&["fit", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_NONCONVERGENCE, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(error_kind(&o), "non_convergence");
}

#[test]
fn three_point_dataset_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = senarmont_config(&dir, "expected", 1.56);
    let data = write(&dir, "short.csv", "angle_rad,counts,integration_s\n0.0,2500,1\n0.3,100,1\n0.6,900,1\n");
    let o = run(&["fit", "--config", cfg.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_DEGENERATE);
    assert_eq!(error_kind(&o), "insufficient_data");
}

#[test]
fn malformed_inputs_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", r#"{"mode": "quantum", "unknown": 1}"#);
    assert_eq!(code(&run(&["simulate", "--config", bad.to_str().unwrap()])), EXIT_CONFIG);
    assert_eq!(code(&run(&["simulate"])), EXIT_CONFIG);
    assert_eq!(code(&run(&["frobnicate"])), EXIT_CONFIG);
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&run(&["simulate", "--config", missing.to_str().unwrap()])), EXIT_CONFIG);
}

#[test]
fn characterize_ideal_source() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "char.json",
        &format!(r#"{{"state": {{"visibility": 1.0}}, "detection": {IDEAL}, "sampling": "expected", "seed": 0}}"#),
    );
    let out = dir.path().join("out");
    let o = run(&["characterize", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("characterization_report.json"));
    assert!((r["visibility_h"]["visibility"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((r["visibility_d"]["visibility"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((r["chsh"]["s_value"].as_f64().unwrap() - 2.0 * SQRT_2).abs() < 1e-9);
    assert!((r["tomography"]["fidelity_to_target"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let rho = read_json(&out.join("rho.json"));
    assert_eq!(rho["real"].as_array().unwrap().len(), 4);
    assert_eq!(rho["imag"].as_array().unwrap().len(), 4);
    for f in ["fringe_h.csv", "fringe_d.csv", "chsh.csv", "tomography_counts.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn noise_free_table_is_exact() {
    let report = run_table1(&Table1Bundle::noise_free()).unwrap();
    for cell in &report.cells {
        for s in [&cell.long_duration, &cell.varying_axes].into_iter().flatten() {
            assert!(s.max_abs_relative_error < 1e-8, "{} / {}: {}", cell.case, cell.sample, s.max_abs_relative_error);
        }
        assert!(cell.failures.is_empty());
    }
}

#[test]
fn compensated_quantum_spread_does_not_exceed_classical() {
    let mut bundle = Table1Bundle::default();
    bundle.samples.retain(|s| s.label == "QWP");
    bundle.cases.retain(|c| c.compensator);
    // the background penalty is ~10% in std; 1000 repetitions resolve it at ~3σ
    bundle.repetitions = 1000;
    bundle.axis_schedule_deg = vec![15.0, 30.0, 60.0, 75.0];
    let report = run_table1(&bundle).unwrap();
    let cell = |case: &str| report.cells.iter().find(|c| c.case == case).unwrap();
    let (q, c) = (cell("quantum, compensator"), cell("classical, compensator"));
    let long = (q.long_duration.as_ref().unwrap().std_delta, c.long_duration.as_ref().unwrap().std_delta);
    let axes = (q.varying_axes.as_ref().unwrap().std_delta, c.varying_axes.as_ref().unwrap().std_delta);
    assert!(long.0 <= long.1, "long duration: quantum {} vs classical {}", long.0, long.1);
    assert!(axes.0 <= axes.1, "varying axes: quantum {} vs classical {}", axes.0, axes.1);
}

#[test]
fn table1_writes_json_and_text() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "t.json", r#"{"repetitions": 3, "axis_schedule_deg": [30, 60], "seed": 1}"#);
    let out = dir.path().join("out");
    assert_eq!(code(&run(&["table1", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])), EXIT_OK);
    let text = std::fs::read_to_string(out.join("table1.txt")).unwrap();
    assert!(text.contains("HWP") && text.contains("QWP"));
    let json = read_json(&out.join("table1.json"));
    assert_eq!(json["cells"].as_array().unwrap().len(), 6);
}
