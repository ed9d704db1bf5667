use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const PI: &str = "3.141592653589793";

fn gpsobol(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpsobol")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

/// The error document is the last line of stderr; log lines may precede it.
fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap_or_default()).unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn ishigami_inputs() -> String {
    let u = format!(r#"{{"kind": "uniform", "a": -{PI}, "b": {PI}}}"#);
    format!("[{u}, {u}, {u}]")
}

fn unit_inputs(d: usize) -> String {
    let u = r#"{"kind": "uniform", "a": 0.0, "b": 1.0}"#;
    format!("[{}]", vec![u; d].join(", "))
}

/// lhs + fit for a test function; returns the fit report.
fn fit_function(dir: &Path, function: &str, inputs: &str, n: usize, fit: &str, seed: &str) -> serde_json::Value {
    fs::write(dir.join("lhs.json"), format!(r#"{{"n": {n}, "function": {function}}}"#)).unwrap();
    ok(&gpsobol(dir, &["lhs", "--config", "lhs.json", "--seed", seed, "--out", "run"]));
    fs::write(dir.join("fit.json"), format!(r#"{{"inputs": {inputs}, "design": "run/design.csv", "fit": {fit}}}"#)).unwrap();
    ok(&gpsobol(dir, &["fit", "--config", "fit.json", "--seed", seed, "--out", "run"]));
    read_json(&dir.join("run/fit_report.json"))
}

#[test]
fn linear_dataset_fits_almost_perfectly() {
    let tmp = TempDir::new().unwrap();
    let mut csv = String::from("a,b,response\n");
    for j in 0..10 {
        let x1 = (j as f64 + 0.5) / 10.0;
        let x2 = ((3 * j + 1) % 10) as f64 / 10.0 + 0.05;
        csv.push_str(&format!("{x1},{x2},{}\n", 1.0 + 2.0 * x1 - 3.0 * x2));
    }
    fs::write(tmp.path().join("data.csv"), csv).unwrap();
    fs::write(tmp.path().join("fit.json"), format!(r#"{{"inputs": {}, "design": "data.csv"}}"#, unit_inputs(2))).unwrap();
    ok(&gpsobol(tmp.path(), &["fit", "--config", "fit.json", "--out", "out"]));
    let report = read_json(&tmp.path().join("out/fit_report.json"));
    assert!(report["loo"]["q2"].as_f64().unwrap() >= 0.99, "{report}");
    assert!(tmp.path().join("out/model.json").exists());
}

#[test]
fn ishigami_fit_and_indices() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let report = fit_function(dir, r#"{"kind": "ishigami", "a": 7.0, "b": 0.1}"#, &ishigami_inputs(), 130, "{}", "3");
    assert!(report["loo"]["q2"].as_f64().unwrap() >= 0.85, "{report}");
    for key in ["theta", "p", "sigma2", "beta", "log_likelihood"] {
        assert!(!report[key].is_null(), "{key} missing");
    }

    fs::write(dir.join("sobol.json"), format!(r#"{{"inputs": {}, "model": "run/model.json", "level": 0.9}}"#, ishigami_inputs()))
        .unwrap();
    ok(&gpsobol(dir, &["sobol", "--config", "sobol.json", "--seed", "3", "--out", "run"]));
    let csv = fs::read_to_string(dir.join("run/sobol.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "input,S,mu,sigma,ci_lo,ci_hi");
    assert_eq!(lines.len(), 4);
    for line in &lines[1..] {
        let v: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(v.len(), 6);
        assert!(v[4] <= v[5]);
    }
    let json = read_json(&dir.join("run/sobol.json"));
    assert_eq!(json["converged"], serde_json::Value::Bool(true));
    assert_eq!(json["indices"].as_array().unwrap().len(), 3);
    assert!(json["indices"][0]["convergence"]["converged"].is_boolean());
}

#[test]
fn gsobol_ranking_follows_coefficients() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let function = r#"{"kind": "gsobol", "a": [0, 1, 4.5, 9, 99]}"#;
    let report = fit_function(dir, function, &unit_inputs(5), 200, r#"{"estimate_p": true}"#, "11");
    assert!(report["loo"]["q2"].as_f64().unwrap() > 0.95, "{report}");
    fs::write(
        dir.join("sobol.json"),
        format!(r#"{{"inputs": {}, "model": "run/model.json", "simulation": {{"k_sim": 2000}}, "convergence_check": false}}"#, unit_inputs(5)),
    )
    .unwrap();
    ok(&gpsobol(dir, &["sobol", "--config", "sobol.json", "--out", "run"]));
    let json = read_json(&dir.join("run/sobol.json"));
    let mu: Vec<f64> = json["indices"].as_array().unwrap().iter().map(|r| r["mu"].as_f64().unwrap()).collect();
    assert!(mu.windows(2).all(|w| w[0] > w[1]), "{mu:?}");
}

#[test]
fn missing_response_column_is_a_schema_error() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("data.csv"), "x1,x2\n0.1,0.2\n0.3,0.4\n0.7,0.9\n").unwrap();
    fs::write(tmp.path().join("fit.json"), format!(r#"{{"inputs": {}, "design": "data.csv"}}"#, unit_inputs(2))).unwrap();
    let out = gpsobol(tmp.path(), &["fit", "--config", "fit.json", "--out", "out"]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_json(&out);
    assert_eq!(err["error"]["kind"], "schema");
    assert!(err["error"]["message"].as_str().unwrap().contains("response"));
}

#[test]
fn unknown_keys_and_bad_values_are_rejected() {
    let tmp = TempDir::new().unwrap();
    for (name, body) in [
        ("a.json", r#"{"n": 10, "function": {"kind": "ishigami", "a": 7, "b": 0.1}, "size": 3}"#.to_string()),
        ("b.json", format!(r#"{{"n": 10, "inputs": {}, "function": {{"kind": "ishigami", "a": 7, "b": 0.1}}}}"#, unit_inputs(2))),
        ("c.json", r#"{"n": 10, "inputs": [{"kind": "uniform", "a": 1, "b": 0}]}"#.to_string()),
    ] {
        fs::write(tmp.path().join(name), body).unwrap();
        let out = gpsobol(tmp.path(), &["lhs", "--config", name]);
        assert_eq!(out.status.code(), Some(2), "{name}");
    }
    fs::write(tmp.path().join("s.json"), format!(r#"{{"inputs": {}, "model": "m.json", "level": 1.5}}"#, unit_inputs(1))).unwrap();
    assert_eq!(gpsobol(tmp.path(), &["sobol", "--config", "s.json"]).status.code(), Some(2));
}

#[test]
fn nonconverged_quadrature_sets_exit_code() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let spiky = r#"{"theta": [1e9, 1e9, 1e9]}"#;
    fit_function(dir, r#"{"kind": "ishigami", "a": 7.0, "b": 0.1}"#, &ishigami_inputs(), 30, spiky, "5");
    let sobol = format!(
        r#"{{"inputs": {}, "model": "run/model.json", "simulation": {{"k_sim": 500, "n_dis": 40}}, "convergence_check": false}}"#,
        ishigami_inputs()
    );
    fs::write(dir.join("sobol.json"), sobol).unwrap();
    let out = gpsobol(dir, &["sobol", "--config", "sobol.json", "--out", "run"]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_json(&out);
    assert_eq!(err["error"]["kind"], "not_converged");
    assert_eq!(read_json(&dir.join("run/sobol.json"))["quadrature"]["converged"], false);
    ok(&gpsobol(dir, &["sobol", "--config", "sobol.json", "--out", "run", "--allow-nonconverged"]));
}

#[test]
fn bench_writes_all_tables() {
    let tmp = TempDir::new().unwrap();
    let config = r#"{
        "study": {"test_size": 500, "fit": {"n_starts": 2}, "simulation": {"n_dis": 30, "k_sim": 300}},
        "plan": {
            "gsobol_convergence": {"sizes": [20, 30], "replicates": 10},
            "gsobol_coverage": {"sizes": [20], "replicates": 2},
            "ishigami_coverage": {"sizes": [40], "replicates": 2}
        }
    }"#;
    fs::write(tmp.path().join("bench.json"), config).unwrap();
    ok(&gpsobol(tmp.path(), &["bench", "--config", "bench.json", "--seed", "1", "--out", "out"]));
    let read = |name: &str| fs::read_to_string(tmp.path().join("out").join(name)).unwrap();
    for name in ["table1.csv", "fig_convergence.csv", "fig_coverage.csv", "table2.csv"] {
        assert!(read(name).lines().count() > 1, "{name} empty");
    }
    assert_eq!(read("table1.csv").lines().count(), 3);
    let coverage = read("fig_coverage.csv");
    for i in 1..=3 {
        assert!(coverage.lines().any(|l| l.starts_with("ishigami,40,") && l.split(',').nth(3) == Some(&i.to_string())));
    }
    assert_eq!(read("table2.csv").lines().count(), 6);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("lhs.json"), r#"{"n": 40, "function": {"kind": "ishigami", "a": 7.0, "b": 0.1}}"#).unwrap();
    let inputs = ishigami_inputs();
    let files = ["design.csv", "model.json", "fit_report.json", "sobol.csv", "sobol.json", "samples_2.csv"];
    for (out, threads) in [("a", "1"), ("b", "4")] {
        fs::write(dir.join(format!("fit_{out}.json")), format!(r#"{{"inputs": {inputs}, "design": "{out}/design.csv"}}"#)).unwrap();
        fs::write(
            dir.join(format!("sobol_{out}.json")),
            format!(r#"{{"inputs": {inputs}, "model": "{out}/model.json", "samples": true, "simulation": {{"k_sim": 1000}}}}"#),
        )
        .unwrap();
        let common = ["--seed", "42", "--out", out, "--threads", threads, "--allow-nonconverged"];
        ok(&gpsobol(dir, &[&["lhs", "--config", "lhs.json"][..], &common].concat()));
        ok(&gpsobol(dir, &[&["fit", "--config", &format!("fit_{out}.json")][..], &common].concat()));
        ok(&gpsobol(dir, &[&["sobol", "--config", &format!("sobol_{out}.json")][..], &common].concat()));
    }
    for f in files {
        assert_eq!(fs::read(dir.join("a").join(f)).unwrap(), fs::read(dir.join("b").join(f)).unwrap(), "{f} differs");
    }
}
