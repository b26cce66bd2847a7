use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn shs6v(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shs6v")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&stdout(out)).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SCAN: &str = "max_occupancy = 2\nline_capacity = 1\nstay_probability = 0.8\ndensity = 1\n\
                    epsilons = 0.04\nhorizon = 0.08\ntime_points = 2\npositions = -1,0,1\nreplicas = 3\n";

#[test]
fn weights_print_a_stochastic_table() {
    let csv = stdout(&shs6v(&["weights", "--q", "2", "--I", "2", "--J", "2", "--alpha", "-0.05", "--row", "1,2"]));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("i1,j1,i2,j2,weight"));
    let total: f64 = lines.map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-10);
}

#[test]
fn violated_conditions_are_named() {
    let out = shs6v(&["weights", "--q", "2", "--I", "2", "--J", "1", "--alpha", "-0.5"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("-0.25 < alpha < 0"), "{err}");

    let out = shs6v(&["stationary", "--b", "0.3"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("< b < 1"));

    let out = shs6v(&["she-check", "--rho", "2.5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("0 < rho < 2"));
}

#[test]
fn stationary_reports_coefficients() {
    let v = json(&shs6v(&[
        "stationary",
        "--I",
        "2",
        "--J",
        "1",
        "--b",
        "0.8",
        "--rho",
        "1",
        "--eps",
        "1e-4",
        "--h",
        "1e-3",
    ]));
    assert!((v["coefficients"]["v_star"].as_f64().unwrap() - 1.75).abs() < 1e-12);
    assert!((v["coefficients"]["d_star"].as_f64().unwrap() - 0.875).abs() < 1e-12);
    assert!((v["integrated_covariance"].as_f64().unwrap() - 0.5).abs() < 1e-3);
    assert_eq!(v["dist"]["pmf"].as_array().unwrap().len(), 3);
}

#[test]
fn kernel_and_duality_checks_agree() {
    let args = ["kernel", "--q", "4", "--I", "2", "--J", "1", "--alpha", "-0.05", "--t", "3", "--s", "0"];
    let pos = ["--x1", "-1", "--x2", "2", "--y1", "-3", "--y2", "0", "--oracle"];
    let v = json(&shs6v(&[&args[..], &pos[..]].concat()));
    assert!(v["gap"].as_f64().unwrap() < 1e-8, "{v}");
    assert!(v["nodes"].as_u64().unwrap() <= 1 << 16);

    for mode in ["H", "G", "tiltZ", "tiltD"] {
        let v = json(&shs6v(&[
            "duality-check",
            "--q",
            "2",
            "--I",
            "2",
            "--J",
            "2",
            "--alpha",
            "-0.05",
            "--mode",
            mode,
            "--exact",
            "--steps",
            "2",
        ]));
        let tail = v["tail_mass"].as_f64().unwrap() * v["functional_bound"].as_f64().unwrap().max(1.0);
        assert!(v["gap"].as_f64().unwrap() <= 1e-9 + tail, "{mode}: {v}");
    }
}

#[test]
fn she_check_gaps_are_tiny() {
    let v = json(&shs6v(&["she-check", "--window", "5", "--eps", "0.04", "--steps", "2", "--seed", "4"]));
    for key in ["martingale_mean_gap", "quadratic_variation_gap", "theta_sum_gap", "one_step_gap", "decomposition_gap"]
    {
        assert!(v[key].as_f64().unwrap() <= 1e-10, "{key}: {v}");
    }
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sim.cfg",
        "max_occupancy = 2\nline_capacity = 2\nq = 2\nalpha = -0.05\ndensity = 0.7\nx_left = -3\nwindow = 12\nsteps = 20\n",
    );
    let a = stdout(&shs6v(&["simulate", "--config", &cfg, "--seed", "42"]));
    let b = stdout(&shs6v(&["--threads", "2", "simulate", "--config", &cfg, "--seed", "42"]));
    let c = stdout(&shs6v(&["simulate", "--config", &cfg, "--seed", "43"]));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.starts_with("t,x,eta,N\n"));
    assert_eq!(a.lines().count(), 1 + 21 * 12);
}

#[test]
fn kpz_scan_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "scan.cfg", SCAN);
    let csv1 = dir.path().join("a.csv");
    let csv2 = dir.path().join("b.csv");
    let js = dir.path().join("a.json");
    stdout(&shs6v(&[
        "kpz-scan",
        "--config",
        &cfg,
        "--seed",
        "42",
        "--out",
        csv1.to_str().unwrap(),
        "--json",
        js.to_str().unwrap(),
    ]));
    stdout(&shs6v(&["--threads", "1", "kpz-scan", "--config", &cfg, "--seed", "42", "--out", csv2.to_str().unwrap()]));
    let a = std::fs::read(&csv1).unwrap();
    assert_eq!(a, std::fs::read(&csv2).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1 + 2 * 3 * 3);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&js).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"].as_u64(), Some(42));
    assert_eq!(report["summaries"].as_array().unwrap().len(), 6);

    // the report's config section is itself a valid JSON config
    let cfg_json = write(dir.path(), "scan.json", &report["config"].to_string());
    let csv3 = stdout(&shs6v(&["kpz-scan", "--config", &cfg_json]));
    assert_eq!(csv3.as_bytes(), std::fs::read(&csv1).unwrap());
}

#[test]
fn empty_scan_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "empty.cfg", &SCAN.replace("replicas = 3", "replicas = 0"));
    let csv = stdout(&shs6v(&["kpz-scan", "--config", &cfg]));
    assert_eq!(csv, "epsilon,t,x,site,remainder,replica,value\n");
}

#[test]
fn undersized_scan_window_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "narrow.cfg", &format!("{SCAN}window = 5\n"));
    let out = shs6v(&["kpz-scan", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("below the required"));
}
