use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn plap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plap"))
        .args(args)
        .env("PLAP_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn mode_at_p2_gives_closed_form_exponent() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mode");
    let o = plap(&["mode", "--p", "2", "--alpha", "0.7853981633974483", "--sign", "+", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["passed"], Value::Bool(true));
    let lambda = r["results"]["lambda"].as_f64().unwrap();
    assert!((lambda - 2.0).abs() < 1e-12, "lambda = {lambda}");
    assert!(out.join("data.json").exists());

    let out = tmp.path().join("neg");
    let o = plap(&["mode", "--p", "2", "--alpha", "0.7853981633974483", "--sign", "-", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let lambda = report(&out)["results"]["lambda"].as_f64().unwrap();
    assert!((lambda + 2.0).abs() < 1e-12, "lambda = {lambda}");
}

#[test]
fn usage_errors_exit_2_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bad");
    let cases: &[&[&str]] = &[
        &["mode", "--p", "abc", "--alpha", "1", "--sign", "+"],
        &["mode", "--p", "2", "--alpha", "1", "--sign", "x"],
        &["mode", "--p", "0.5", "--alpha", "1", "--sign", "+"],
        &["measure", "--p", "2", "--arcs", "0-1"],
        &["theorem-a", "--p", "1.5"],
        &["suite", "smoke", "--only", "13"],
        &["no-such-command"],
        &[],
    ];
    for args in cases {
        let mut a = args.to_vec();
        a.extend(["--out", s(&out)]);
        let o = plap(&a);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "{args:?} left artifacts");
    }
}

#[test]
fn config_and_subcommand_together_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, "{}").unwrap();
    let o = plap(&["--config", s(&cfg), "mode", "--p", "2", "--alpha", "1", "--sign", "+"]);
    assert_eq!(code(&o), 2);
    let o = plap(&["--config", s(&cfg)]);
    assert_eq!(code(&o), 2, "malformed config file");
}

#[test]
fn solve_writes_field_csv_matching_harmonic_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = tmp.path().join("cos3.csv");
    let n = 256;
    let mut text = String::from("theta,value\n");
    for j in 0..n {
        let t = 2.0 * PI * j as f64 / n as f64;
        text.push_str(&format!("{t},{}\n", (3.0 * t).cos()));
    }
    std::fs::write(&trace, text).unwrap();
    let out = tmp.path().join("solve");
    let o = plap(&[
        "solve", "--domain", "disk", "--p", "2", "--trace", s(&trace), "--format", "csv", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let field = std::fs::read_to_string(out.join("field.csv")).unwrap();
    let mut lines = field.lines();
    assert_eq!(lines.next(), Some("r,theta,value"));
    assert_eq!(lines.count(), 1 + 64 * n);
    let r = report(&out);
    assert!(r["results"]["harmonic_oracle_error"].as_f64().unwrap() < 1e-3);
}

#[test]
fn reports_are_byte_identical_and_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    let args = ["measure", "--p", "3", "--arcs", "0.3:1.8", "--delta", "0.08", "--seed", "7"];
    for dir in [&a, &b] {
        let mut v = args.to_vec();
        v.extend(["--out", s(dir)]);
        assert_eq!(code(&plap(&v)), 0);
    }
    let ra = std::fs::read(a.join("report.json")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("report.json")).unwrap());
    assert_eq!(std::fs::read(a.join("data.json")).unwrap(), std::fs::read(b.join("data.json")).unwrap());

    let cfg = a.join("config.json");
    assert_eq!(code(&plap(&["--config", s(&cfg), "--out", s(&c)])), 0);
    assert_eq!(ra, std::fs::read(c.join("report.json")).unwrap());
    let parsed = plap_cli::RunConfig::from_json(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    assert_eq!(parsed.seed, 7);
    assert_eq!(parsed.to_json(), std::fs::read_to_string(&cfg).unwrap());
}

#[test]
fn solver_failure_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = plap_cli::RunConfig::new(plap_cli::config::Command::Measure {
        p: 3.0,
        arcs: vec![(0.0, 1.0)],
        delta: 0.08,
    });
    cfg.solver.max_newton = 1;
    cfg.out_dir = tmp.path().join("out");
    let path = tmp.path().join("cfg.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    let o = plap(&["--config", s(&path)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!cfg.out_dir.exists());
}

#[test]
fn smoke_suite_passes_cheap_criteria() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("suite");
    let o = plap(&["suite", "smoke", "--only", "1,2,4", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.matches("PASS").count(), 3);
}

#[test]
fn sabotaged_tolerance_fails_residual_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("good");
    let bad = tmp.path().join("bad");
    assert_eq!(code(&plap(&["suite", "smoke", "--only", "12", "--out", s(&good)])), 0);
    assert_eq!(code(&plap(&["suite", "smoke", "--only", "12", "--tol-scale", "1e6", "--out", s(&bad)])), 1);
    let r = report(&bad);
    let failing: Vec<&str> = r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"] == Value::Bool(false))
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(failing.iter().any(|n| n.contains("max weak residual")), "{failing:?}");
}
