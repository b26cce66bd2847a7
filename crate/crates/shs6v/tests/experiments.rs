use shs6v::experiments::{kpz_scan, records_csv, ExperimentConfig, KpzReport, Observable, RECORD_HEADER};
use shs6v::stationary::stationary;
use shs6v::ModelParams;
use std::sync::OnceLock;

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/kpz_smoke_seed42.csv");

fn drift_config() -> ExperimentConfig {
    ExperimentConfig {
        epsilons: vec![0.01],
        horizon: 0.1,
        time_points: 5,
        positions: vec![-0.5, 0.0, 0.5],
        replicas: 200,
        seed: 2024,
        ..ExperimentConfig::new(2, 1, 0.8, 1.0)
    }
}

fn smoke_config() -> ExperimentConfig {
    ExperimentConfig {
        epsilons: vec![0.04],
        horizon: 0.16,
        time_points: 2,
        positions: vec![-1.0, 0.0, 1.0],
        replicas: 4,
        seed: 42,
        observables: vec![Observable::Fluctuation],
        ..ExperimentConfig::new(2, 1, 0.8, 1.0)
    }
}

fn drift_report() -> &'static KpzReport {
    static REPORT: OnceLock<KpzReport> = OnceLock::new();
    REPORT.get_or_init(|| kpz_scan(&drift_config()).unwrap())
}

#[test]
fn stationary_field_has_no_drift() {
    let r = drift_report();
    assert_eq!(r.summaries.len(), 15);
    for s in &r.summaries {
        assert!(s.z_score.abs() <= 4.0, "{s:?}");
    }
    eprintln!("max |z| = {:.3}", r.max_abs_z());
}

#[test]
fn occupancy_variance_matches_stationary_law() {
    let r = drift_report();
    let inc = r.increments[0];
    let p = ModelParams::scaled(2, 1, 0.8, 1.0, 0.01).unwrap();
    let want = stationary(&p, 1.0).unwrap().variance;
    assert_eq!(inc.stationary_variance, want);
    assert!((inc.variance - want).abs() <= 4.0 * inc.variance_error, "{inc:?}");
    assert!((inc.mean - 1.0).abs() < 0.01, "{inc:?}");
    assert!((inc.limit_variance - 0.5).abs() < 1e-15);
}

#[test]
fn coefficient_report_repeats_closed_forms() {
    let r = drift_report();
    let c = r.coefficients[0];
    assert!((c.v_star - 1.75).abs() < 1e-12 && (c.d_star - 0.875).abs() < 1e-12);
    assert!((c.integrated_covariance - r.increments[0].stationary_variance).abs() < 1e-15);
}

#[test]
fn smoke_run_matches_golden_file() {
    let csv = records_csv(&kpz_scan(&smoke_config()).unwrap().records);
    assert!(csv.starts_with(RECORD_HEADER));
    if std::env::var_os("SHS6V_FREEZE_GOLDEN").is_some() {
        std::fs::write(GOLDEN, &csv).unwrap();
    }
    let golden = std::fs::read_to_string(GOLDEN).expect("golden file missing; rerun with SHS6V_FREEZE_GOLDEN=1");
    assert_eq!(csv, golden);
}

#[test]
fn thread_count_does_not_change_output() {
    let c = smoke_config();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = pool.install(|| kpz_scan(&c).unwrap());
    let b = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| kpz_scan(&c).unwrap());
    assert_eq!(records_csv(&a.records), records_csv(&b.records));
}
