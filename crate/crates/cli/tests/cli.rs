use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn spillover(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spillover"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn simulate(dir: &Path, out: &str, seed: &str) {
    let o = spillover(dir, &["simulate", "--n", "120", "--seed", seed, "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_fit_estimate_pipeline() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    simulate(dir, "sim", "3");
    for f in ["panel.csv", "truth.json", "config.json", "manifest.json"] {
        assert!(dir.join("sim").join(f).exists(), "{f}");
    }

    let o = spillover(
        dir,
        &["fit", "--data", "sim/panel.csv", "--draws", "300", "--burnin", "100", "--chains", "2", "--out", "fit/post.draws"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&dir.join("fit/manifest.json"));
    assert_eq!(m["subcommand"], "fit");
    assert_eq!(m["status"], "ok");
    assert_eq!(m["inputs"][0], "sim/panel.csv");

    let o = spillover(
        dir,
        &["estimate", "--posterior", "fit/post.draws", "--data", "sim/panel.csv", "--draws-out", "omega.csv", "omega", "--delta", "0.5"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = stdout_json(&o);
    assert_eq!(report["n_draws"], 400);
    let results = report["results"].as_array().unwrap();
    let labels: Vec<&str> = results.iter().map(|r| r["label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["omega", "omega_dir", "omega_sp", "mean_residual"]);
    for r in results {
        let (lo, mean, hi) = (r["lower"].as_f64().unwrap(), r["mean"].as_f64().unwrap(), r["upper"].as_f64().unwrap());
        assert!(lo <= mean && mean <= hi);
    }
    let mean = |i: usize| results[i]["mean"].as_f64().unwrap();
    assert!((mean(0) - (mean(1) + mean(2) + mean(3))).abs() < 1e-10);
    let draws = fs::read_to_string(dir.join("omega.csv")).unwrap();
    assert_eq!(draws.lines().count(), 401);

    let o = spillover(
        dir,
        &["estimate", "--posterior", "fit/post.draws", "--data", "sim/panel.csv", "lambda", "--w", "0", "--g", "0", "--dw", "0.5", "--dg", "0"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = stdout_json(&o);
    let sp = r["results"].as_array().unwrap().iter().find(|x| x["label"] == "lambda_sp").unwrap();
    assert_eq!(sp["mean"].as_f64().unwrap(), 0.0);

    let o = spillover(
        dir,
        &["estimate", "--posterior", "fit/post.draws", "--data", "sim/panel.csv", "curve", "--base", "0", "--grid", "-1:1:5", "--csv", "curve.csv"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(dir.join("curve.csv")).unwrap().lines().count(), 6);

    // two values for five exposures
    let o = spillover(dir, &["estimate", "--posterior", "fit/post.draws", "--data", "sim/panel.csv", "phi", "--w", "0,1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn xi_reference_value() {
    let tmp = TempDir::new().unwrap();
    let o = spillover(
        tmp.path(),
        &["bias", "xi", "--tau-dist", "uniform:0.25:0.75", "--eta-dist", "uniform:-0.25:0.25"],
    );
    assert!(o.status.success());
    let v = stdout_json(&o);
    for key in ["xi_w", "xi_g"] {
        assert!((v[key].as_f64().unwrap() - 13.0 / 14.0).abs() < 1e-12);
    }
    let m = json(&tmp.path().join("manifest.json"));
    assert_eq!(m["config"]["diagnostic"], "xi");
    assert_eq!(m["config"]["tau_dist"], "uniform:0.25:0.75");
}

#[test]
fn unknown_flag_is_a_validation_error_with_manifest() {
    let tmp = TempDir::new().unwrap();
    let o = spillover(tmp.path(), &["fit", "--bogus", "--manifest", "run/m.json"]);
    assert_eq!(o.status.code(), Some(1));
    let m = json(&tmp.path().join("run/m.json"));
    assert_eq!(m["status"], "validation_error");
    assert_eq!(m["subcommand"], "fit");
    assert!(m["error"].as_str().unwrap().contains("--bogus"));
}

#[test]
fn missing_input_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let o = spillover(tmp.path(), &["fit", "--data", "absent.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&tmp.path().join("manifest.json"))["status"], "validation_error");
}

#[test]
fn degenerate_setting_is_a_numerical_failure() {
    let tmp = TempDir::new().unwrap();
    // tau = 1/2 and rho = -1 make the combined exposure constant
    let o = spillover(tmp.path(), &["bias", "weighted-star", "--tau", "0.5", "--rho", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    let m = json(&tmp.path().join("manifest.json"));
    assert_eq!(m["status"], "numerical_failure");
    assert!(m["error"].is_string());
}

#[test]
fn help_exits_zero() {
    let tmp = TempDir::new().unwrap();
    let o = spillover(tmp.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("simulate"));
}

#[test]
fn manifest_reproduces_simulation() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    simulate(dir, "a", "17");
    let m = json(&dir.join("a/manifest.json"));
    assert_eq!(m["seeds"]["simulate"], 17);
    assert_eq!(m["config"]["seed"], 17);
    fs::write(dir.join("cfg.json"), m["config"].to_string()).unwrap();

    let o = spillover(dir, &["simulate", "--config", "cfg.json", "--out", "b"]);
    assert!(o.status.success());
    let read = |d: &str| fs::read(dir.join(d).join("panel.csv")).unwrap();
    assert_eq!(read("a"), read("b"));

    simulate(dir, "c", "18");
    assert_ne!(read("a"), read("c"));
}

#[test]
fn fit_is_reproducible_for_a_seed() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    simulate(dir, "sim", "5");
    let run = |out: &str, seed: &str| {
        let o = spillover(
            dir,
            &["fit", "--data", "sim/panel.csv", "--draws", "200", "--burnin", "50", "--seed", seed, "--out", out],
        );
        assert!(o.status.success());
        fs::read(dir.join(out)).unwrap()
    };
    let a = run("a.draws", "4");
    assert_eq!(a, run("b.draws", "4"));
    assert_ne!(a, run("c.draws", "5"));
}

#[test]
fn mobility_weights_from_flows() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("flows.csv"), "3,1,0\n0,2,0\n1,1,2\n").unwrap();
    let o = spillover(dir, &["mobility", "--matrix", "flows.csv", "--out", "mob"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(dir.join("mob/weights.csv")).unwrap();
    let rows: Vec<Vec<String>> = rdr.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect();
    let tau: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(tau, [0.75, 1.0, 0.5]);
    assert_eq!(rows[1][2], "true");
}
