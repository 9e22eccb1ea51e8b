use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use drosc::stationarity::StationarityCertificate;
use drosc_cli::commands::RunRecord;
use serde_json::Value;
use tempfile::TempDir;

fn drosc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drosc"))
        .args(args)
        .current_dir(dir)
        .env_remove("DROSC_JOBS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn solve_lcp_examples() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("id.json"), r#"{"M": [[1, 0], [0, 1]], "q": [-1, 2]}"#).unwrap();
    let out = drosc(&["solve-lcp", "id.json"], d);
    assert_eq!(code(&out), 0);
    assert_eq!(floats(&stdout_json(&out)["y"]), vec![1.0, 0.0]);

    fs::write(d.join("pos.json"), r#"{"M": [[2, 1], [0, 3]], "q": [0.5, 4]}"#).unwrap();
    let out = drosc(&["solve-lcp", "pos.json"], d);
    assert_eq!(floats(&stdout_json(&out)["y"]), vec![0.0, 0.0]);

    // Demand block for u = (1, 1); the regularized shares are (1+ε)/(2+ε²).
    fs::write(d.join("block.json"), r#"{"M": [[0, 0, 1], [0, 0, 1], [-1, -1, 0]], "q": [-1, -1, 1]}"#).unwrap();
    let out = drosc(&["solve-lcp", "block.json", "--eps", "0.1", "--out", "block_out.json"], d);
    assert_eq!(code(&out), 0);
    let y: Value = serde_json::from_str(&fs::read_to_string(d.join("block_out.json")).unwrap()).unwrap();
    let t = 1.1 / 2.01;
    for v in &floats(&y["y"])[..2] {
        assert!((v - t).abs() < 1e-10 && (v - 0.5473).abs() < 1e-4);
    }

    fs::write(d.join("bad.json"), r#"{"M": [[1, 0]"#).unwrap();
    assert_eq!(code(&drosc(&["solve-lcp", "bad.json"], d)), 2);
    fs::write(d.join("indef.json"), r#"{"M": [[-1, 0], [0, 1]], "q": [1, 1]}"#).unwrap();
    assert_eq!(code(&drosc(&["solve-lcp", "indef.json"], d)), 3);
}

#[test]
fn run_writes_state_and_certificate() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("cfg.json"), r#"{"reference_x": [0, 0, 1, 0, 0], "output_dir": "run"}"#).unwrap();
    let out = drosc(&["run", "--config", "cfg.json", "--eps", "0.1", "--k", "25", "--eta", "0.5"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let record: RunRecord = serde_json::from_str(&fs::read_to_string(d.join("run/state.json")).unwrap()).unwrap();
    assert!(record.state.residual_x <= 1e-4);
    assert!(record.x_err.unwrap() <= 0.2);
    let cert: StationarityCertificate =
        serde_json::from_str(&fs::read_to_string(d.join("run/certificate.json")).unwrap()).unwrap();
    assert!(cert.passed && cert.res_x <= 1e-4);

    // Certifying from scratch reproduces the run's certificate.
    let again = drosc(&["certify", "run/state.json", "--out", "again.json"], d);
    assert_eq!(code(&again), 0);
    let again: StationarityCertificate =
        serde_json::from_str(&fs::read_to_string(d.join("again.json")).unwrap()).unwrap();
    assert_eq!(again.klass, cert.klass);
    assert!((again.res_x - cert.res_x).abs() <= 1e-10 && (again.res_p - cert.res_p).abs() <= 1e-10);
}

#[test]
fn certify_rejects_perturbed_states() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(code(&drosc(&["run", "--out", "run"], d)), 0);
    let text = fs::read_to_string(d.join("run/state.json")).unwrap();

    // x₂ is free (strictly inside the box) at the solution.
    let mut record: RunRecord = serde_json::from_str(&text).unwrap();
    assert!(record.state.x[1] > 0.0 && record.state.x[1] < 1.9);
    record.state.x[1] += 0.1;
    fs::write(d.join("moved.json"), serde_json::to_string(&record).unwrap()).unwrap();
    let out = drosc(&["certify", "moved.json"], d);
    assert_eq!(code(&out), 3);
    let cert = stdout_json(&out);
    assert!(cert["res_x"].as_f64().unwrap() > 1e-2);
    assert_eq!(cert["passed"], Value::Bool(false));

    let mut record: RunRecord = serde_json::from_str(&text).unwrap();
    let mut p = record.state.p.clone().into_inner();
    p[0] += 0.5;
    record.state.p = serde_json::from_value(serde_json::to_value(p).unwrap()).unwrap();
    fs::write(d.join("tampered.json"), serde_json::to_string(&record).unwrap()).unwrap();
    let out = drosc(&["certify", "tampered.json"], d);
    assert_eq!(code(&out), 3);
    assert!(stdout_json(&out)["feasibility"].as_f64().unwrap() > 0.1);

    fs::write(d.join("garbage.json"), "not json").unwrap();
    assert_eq!(code(&drosc(&["certify", "garbage.json"], d)), 2);
}

#[test]
fn run_edge_cases() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    // A single sample at μ₀ makes 𝒫_k a point.
    let out = drosc(&["run", "--k", "1", "--out", "single"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("single/state.json").exists());

    fs::write(
        d.join("off.json"),
        r#"{"samples": [[0.5, 0.5], [0.9, 0.2]], "k_list": [2], "eta_list": [0.1], "output_dir": "off"}"#,
    )
    .unwrap();
    let out = drosc(&["run", "--config", "off.json"], d);
    assert_eq!(code(&out), 3);
    let report: Value = serde_json::from_str(&fs::read_to_string(d.join("off/infeasibility.json")).unwrap()).unwrap();
    assert_eq!(report["slater"]["status"], "infeasible");
    assert!(report["hull"]["lower"].as_f64().unwrap() > 0.1);

    // One outer iteration is not enough at small ε: exit 4, artifacts kept.
    fs::write(d.join("short.json"), r#"{"solver": {"max_outer": 1}, "output_dir": "short"}"#).unwrap();
    let out = drosc(&["run", "--config", "short.json", "--eps", "0.01"], d);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(d.join("short/state.json").exists() && d.join("short/certificate.json").exists());

    fs::write(d.join("typo.json"), r#"{"eps": [0.1]}"#).unwrap();
    assert_eq!(code(&drosc(&["run", "--config", "typo.json"], d)), 2);
    assert_eq!(code(&drosc(&["run", "--k", "24"], d)), 2);
}

#[test]
fn sweep_rows_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let args = ["sweep", "--eps", "0.5,0.2,0.1", "--k", "4,25", "--eta", "0.5"];
    let a = drosc(&[&args[..], &["--out", "a"]].concat(), d);
    assert_eq!(code(&a), 0);
    let b = Command::new(env!("CARGO_BIN_EXE_drosc"))
        .args([&args[..], &["--out", "b", "--jobs", "1"]].concat())
        .current_dir(d)
        .env("DROSC_JOBS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&b), 0);
    let csv_a = fs::read(d.join("a/sweep.csv")).unwrap();
    assert_eq!(csv_a, fs::read(d.join("b/sweep.csv")).unwrap());
    assert_eq!(csv_a, a.stdout);

    let text = String::from_utf8(csv_a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "eps,k,eta,value,x_err,res_x,res_p,iters,seconds,status");
    assert_eq!(lines.len(), 7);
    let keys: Vec<(String, String)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    assert_eq!(keys[0], ("0.5".to_string(), "4".to_string()));
    assert_eq!(keys[5], ("0.1".to_string(), "25".to_string()));

    // Row failures land in the status column; the sweep itself succeeds.
    fs::write(
        d.join("off.json"),
        r#"{"samples": [[0.5, 0.5], [0.9, 0.2]], "k_list": [2], "eta_list": [0.1, 1.0], "output_dir": "off"}"#,
    )
    .unwrap();
    let out = drosc(&["sweep", "--config", "off.json"], d);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert!(rows[0].contains("error: ambiguity set is empty"), "{}", rows[0]);
    assert!(rows[1].ends_with(",converged") || rows[1].ends_with(",stalled"), "{}", rows[1]);
}

#[test]
fn transport_reports() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("a.csv"), "coordinate_1,coordinate_2,weight\n0.1,0.2,1\n").unwrap();
    fs::write(d.join("b.csv"), "coordinate_1,coordinate_2,weight\n0.4,0.6,1\n").unwrap();
    let out = drosc(&["transport", "a.csv", "b.csv"], d);
    assert_eq!(code(&out), 0);
    assert!((stdout_json(&out)["wasserstein"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    // Atoms on the 5×5 midpoint grid project onto themselves.
    fs::write(d.join("grid.csv"), "coordinate_1,coordinate_2,weight\n-0.8,0.4,0.25\n0.0,0.0,0.75\n").unwrap();
    let r = stdout_json(&drosc(&["transport", "grid.csv", "--k", "25"], d));
    assert!(r["projection_distance"].as_f64().unwrap().abs() < 1e-12);
    assert!((r["fill_distance"].as_f64().unwrap() - 2f64.sqrt() / 5.0).abs() < 1e-12);

    let r = stdout_json(&drosc(&["transport", "a.csv", "--k", "25"], d));
    assert!(r["margin"].as_f64().unwrap() >= -1e-10);

    fs::write(d.join("broken.csv"), "x,y\n1,2\n").unwrap();
    assert_eq!(code(&drosc(&["transport", "broken.csv", "a.csv"], d)), 2);
    assert_eq!(code(&drosc(&["transport", "a.csv"], d)), 2);
}
