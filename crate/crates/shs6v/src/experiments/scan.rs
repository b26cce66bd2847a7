//! Weakly asymmetric scan of the fused height fluctuation field under
//! product stationary data.
//!
//! At fused time `T` and macroscopic position `x` the field is
//! `sqrt(eps) (N(J T, site) - rho site) - log lambda_hat(J T)` with
//! `site = floor(x / eps + mu_hat(J T))`. This is `-log Z` at that site, so
//! its mean per fused step is `-(sqrt(eps) flux + log lambda)`, which
//! vanishes to leading order.
//!
//! The window is a cut of stationary data with Bernoulli inflow at the
//! stationary flux rate. Product stationary data with that inflow stays
//! stationary on the window, and sites never influence their left
//! neighbours, so the cut introduces no bias.

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Observable};
use super::ExperimentError;
use crate::dynamics::{make_initial, BoundaryMode, InitialKind, Trajectory};
use crate::kernels::tilt::TiltFrame;
use crate::params::ModelParams;
use crate::rng::RandomEnvironment;
use crate::stationary::{
    current_second_derivative, default_difference_step, flux_probability, kpz_coefficients, stationary,
};

/// Relative slack in the `eps^2 T <= horizon` check.
const HORIZON_SLACK: f64 = 1e-12;

/// Sites, steps and observation times of one `eps`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanLayout {
    pub epsilon: f64,
    /// Fused steps `T`.
    pub steps: usize,
    /// Fused observation times.
    pub checkpoints: Vec<usize>,
    pub x_left: i64,
    pub width: usize,
    /// Minimal admissible width.
    pub required_width: usize,
    /// `mu_hat` after `T` fused steps.
    pub drift: f64,
}

/// Observation point of the field.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Probe {
    t: f64,
    x: f64,
    site: i64,
    remainder: f64,
}

/// One sample of the rescaled fluctuation field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluctuationRecord {
    pub epsilon: f64,
    /// Macroscopic time `eps^2 T_k`.
    pub t: f64,
    pub x: f64,
    /// `floor(x / eps + mu_hat)`.
    pub site: i64,
    /// `x / eps + mu_hat - site`, in `[0, 1)`.
    pub remainder: f64,
    pub replica: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluctuationSummary {
    pub epsilon: f64,
    pub t: f64,
    pub x: f64,
    pub samples: usize,
    pub mean: f64,
    pub std_error: f64,
    /// `mean / std_error` (zero when the error vanishes).
    pub z_score: f64,
}

/// Covariance across replicas of the field at two positions, last time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovarianceEntry {
    pub epsilon: f64,
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    pub covariance: f64,
}

/// Pooled site statistics of the occupancies at the last time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IncrementStats {
    pub epsilon: f64,
    pub samples: usize,
    pub mean: f64,
    pub variance: f64,
    /// Standard error of `variance` for independent sites.
    pub variance_error: f64,
    /// Variance of the stationary single-site law.
    pub stationary_variance: f64,
    /// Small-`eps` limit `rho (I - rho) / I`.
    pub limit_variance: f64,
}

/// Scaling-theory coefficients next to their finite-`eps` counterparts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefficientReport {
    pub epsilon: f64,
    pub v_star: f64,
    pub d_star: f64,
    /// `J V*`, the limit of `-j''`.
    pub curvature_limit: f64,
    /// `-j''(rho)` by central difference.
    pub curvature: f64,
    pub difference_step: f64,
    /// `A(rho)`, the stationary variance.
    pub integrated_covariance: f64,
    /// `D* / V*`, the limit of `A(rho)`.
    pub covariance_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KpzReport {
    pub config: ExperimentConfig,
    pub layouts: Vec<ScanLayout>,
    pub records: Vec<FluctuationRecord>,
    pub summaries: Vec<FluctuationSummary>,
    pub covariances: Vec<CovarianceEntry>,
    pub increments: Vec<IncrementStats>,
    pub coefficients: Vec<CoefficientReport>,
}

impl KpzReport {
    /// Largest `|mean| / std_error` over all summaries.
    pub fn max_abs_z(&self) -> f64 {
        self.summaries.iter().map(|s| s.z_score.abs()).fold(0.0, f64::max)
    }
}

/// Checks the horizon and window constraints and lays out one `eps`.
pub fn layout(config: &ExperimentConfig, epsilon: f64) -> Result<ScanLayout, ExperimentError> {
    let params = config.params(epsilon)?;
    let eps2 = epsilon * epsilon;
    let steps = config.steps.unwrap_or((config.horizon / eps2 * (1.0 + HORIZON_SLACK)).floor() as usize);
    if eps2 * steps as f64 > config.horizon * (1.0 + HORIZON_SLACK) {
        return Err(ExperimentError::HorizonExceeded { epsilon, steps, horizon: config.horizon });
    }
    let mut checkpoints: Vec<usize> =
        (1..=config.time_points).map(|k| steps * k / config.time_points).filter(|&s| s > 0).collect();
    checkpoints.dedup();
    let frame = TiltFrame::new(&params, config.density)?;
    let drift = frame.mu_hat((steps * params.line_capacity) as i64);
    let lo = (config.positions.iter().fold(0.0f64, |a, &x| a.min(x)) / epsilon).floor() as i64;
    let hi = (config.positions.iter().fold(0.0f64, |a, &x| a.max(x)) / epsilon).ceil() as i64;
    let allowance = (4.0 * (steps as f64).sqrt()).ceil() as i64;
    let required = ((hi - lo) + drift.abs().ceil() as i64 + allowance + 1) as usize;
    let width = config.window.unwrap_or(required);
    if width < required {
        return Err(ExperimentError::WindowUnderflow { epsilon, required, given: width });
    }
    Ok(ScanLayout { epsilon, steps, checkpoints, x_left: lo - allowance / 2, width, required_width: required, drift })
}

/// Per-replica output: field values by (checkpoint, position) and pooled
/// occupancy moments at the last checkpoint.
struct ReplicaOutcome {
    values: Vec<f64>,
    moments: [f64; 4],
    sites: usize,
}

fn run_replica(
    params: &ModelParams,
    layout: &ScanLayout,
    probes: &[Probe],
    frame: &TiltFrame,
    initial: &InitialKind,
    mode: &BoundaryMode,
    env: &RandomEnvironment,
) -> Result<ReplicaOutcome, ExperimentError> {
    let rho = frame.rho;
    let j = params.line_capacity;
    let sqrt_eps = params.q.ln();
    let window = make_initial(initial, layout.x_left, layout.width, mode.clone(), params, env);
    let mut traj = Trajectory::new(*params, window)?;
    let per_time = probes.len() / layout.checkpoints.len().max(1);
    let mut values = Vec::with_capacity(probes.len());
    let mut done = 0;
    for (k, &target) in layout.checkpoints.iter().enumerate() {
        for _ in done..target {
            traj.advance_fused(env)?;
        }
        done = target;
        let log_lambda = frame.log_lambda_hat((target * j) as i64);
        for p in &probes[k * per_time..(k + 1) * per_time] {
            let n = traj.heights.at(p.site) as f64;
            values.push(sqrt_eps * (n - rho * p.site as f64) - log_lambda);
        }
    }
    let mut moments = [0.0; 4];
    for &e in &traj.window.values {
        let e = e as f64;
        moments[0] += e;
        moments[1] += e * e;
        moments[2] += e * e * e;
        moments[3] += e * e * e * e;
    }
    Ok(ReplicaOutcome { values, moments, sites: traj.window.values.len() })
}

fn summarize(epsilon: f64, probe: &Probe, samples: &[f64]) -> FluctuationSummary {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n.max(1) as f64;
    let var = if n > 1 { samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    let std_error = (var / n.max(1) as f64).sqrt();
    let z_score = if std_error > 0.0 { mean / std_error } else { 0.0 };
    FluctuationSummary { epsilon, t: probe.t, x: probe.x, samples: n, mean, std_error, z_score }
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1) as f64
}

fn increment_stats(
    params: &ModelParams,
    epsilon: f64,
    outcomes: &[ReplicaOutcome],
    stationary_variance: f64,
) -> IncrementStats {
    let samples: usize = outcomes.iter().map(|o| o.sites).sum();
    let mut m = [0.0; 4];
    for o in outcomes {
        for (acc, v) in m.iter_mut().zip(o.moments) {
            *acc += v;
        }
    }
    let n = samples.max(1) as f64;
    let (m1, m2, m3, m4) = (m[0] / n, m[1] / n, m[2] / n, m[3] / n);
    let variance = m2 - m1 * m1;
    let central4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4);
    let i = params.max_occupancy as f64;
    let rho = params.scaling.map_or(m1, |s| s.density);
    IncrementStats {
        epsilon,
        samples,
        mean: m1,
        variance,
        variance_error: ((central4 - variance * variance).max(0.0) / n).sqrt(),
        stationary_variance,
        limit_variance: rho * (i - rho) / i,
    }
}

fn coefficient_report(params: &ModelParams, epsilon: f64, variance: f64) -> Result<CoefficientReport, ExperimentError> {
    let rho = params.scaling.map_or(0.0, |s| s.density);
    let k = kpz_coefficients(params)?;
    let h = default_difference_step(params);
    Ok(CoefficientReport {
        epsilon,
        v_star: k.v_star,
        d_star: k.d_star,
        curvature_limit: params.line_capacity as f64 * k.v_star,
        curvature: -current_second_derivative(params, rho, h)?,
        difference_step: h,
        integrated_covariance: variance,
        covariance_limit: k.d_star / k.v_star,
    })
}

/// Runs the scan for every `eps` of the configuration.
///
/// Replicas run in parallel with seeds derived from `(seed, eps index,
/// replica)`; results are collected in replica order, so the report does
/// not depend on the thread count.
pub fn kpz_scan(config: &ExperimentConfig) -> Result<KpzReport, ExperimentError> {
    let root = RandomEnvironment::new(config.seed);
    let mut report = KpzReport {
        config: config.clone(),
        layouts: Vec::new(),
        records: Vec::new(),
        summaries: Vec::new(),
        covariances: Vec::new(),
        increments: Vec::new(),
        coefficients: Vec::new(),
    };
    for (e_idx, &epsilon) in config.epsilons.iter().enumerate() {
        let params = config.params(epsilon)?;
        let layout = layout(config, epsilon)?;
        let rho = config.density;
        let dist = stationary(&params, rho)?;
        let frame = TiltFrame::new(&params, rho)?;
        let j = params.line_capacity;
        let probes: Vec<Probe> = layout
            .checkpoints
            .iter()
            .flat_map(|&target| {
                let drift = frame.mu_hat((target * j) as i64);
                config.positions.iter().map(move |&x| {
                    let exact = x / epsilon + drift;
                    let site = exact.floor();
                    Probe { t: epsilon * epsilon * target as f64, x, site: site as i64, remainder: exact - site }
                })
            })
            .collect();
        let initial = InitialKind::Product { pmf: dist.pmf.clone() };
        let inflow = (0..j as i64).map(|t| flux_probability(&params, dist.chi, t)).collect();
        let mode = BoundaryMode::Truncated { inflow };
        let outcomes: Vec<ReplicaOutcome> = (0..config.replicas)
            .into_par_iter()
            .map(|r| {
                let env = root.replica(((e_idx as u64) << 32) | r as u64);
                run_replica(&params, &layout, &probes, &frame, &initial, &mode, &env)
            })
            .collect::<Result<_, _>>()?;

        let column = |k: usize| -> Vec<f64> { outcomes.iter().map(|o| o.values[k]).collect() };
        for (k, p) in probes.iter().enumerate() {
            for (r, o) in outcomes.iter().enumerate() {
                report.records.push(FluctuationRecord {
                    epsilon,
                    t: p.t,
                    x: p.x,
                    site: p.site,
                    remainder: p.remainder,
                    replica: r,
                    value: o.values[k],
                });
            }
            if config.wants(Observable::Fluctuation) && !outcomes.is_empty() {
                report.summaries.push(summarize(epsilon, p, &column(k)));
            }
        }
        let per_time = config.positions.len();
        if config.wants(Observable::Covariance) && !outcomes.is_empty() && !probes.is_empty() {
            let last = probes.len() - per_time;
            for a in 0..per_time {
                for b in a..per_time {
                    report.covariances.push(CovarianceEntry {
                        epsilon,
                        t: probes[last].t,
                        x1: probes[last + a].x,
                        x2: probes[last + b].x,
                        covariance: covariance(&column(last + a), &column(last + b)),
                    });
                }
            }
        }
        if config.wants(Observable::Increments) && !outcomes.is_empty() {
            report.increments.push(increment_stats(&params, epsilon, &outcomes, dist.variance));
        }
        if config.wants(Observable::Coefficients) {
            report.coefficients.push(coefficient_report(&params, epsilon, dist.variance)?);
        }
        report.layouts.push(layout);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            epsilons: vec![0.04],
            horizon: 0.2,
            time_points: 2,
            positions: vec![-0.5, 0.0, 0.5],
            replicas: 6,
            seed: 9,
            ..ExperimentConfig::new(2, 1, 0.8, 1.0)
        }
    }

    #[test]
    fn layout_respects_horizon_and_window() {
        let c = small();
        let l = layout(&c, 0.04).unwrap();
        assert_eq!(l.steps, 125);
        assert_eq!(l.checkpoints, vec![62, 125]);
        assert!(l.x_left <= -13);
        assert!(l.x_left + l.width as i64 > 13 + l.drift as i64);

        let over = ExperimentConfig { steps: Some(126), ..c.clone() };
        assert!(matches!(layout(&over, 0.04), Err(ExperimentError::HorizonExceeded { .. })));
        let narrow = ExperimentConfig { window: Some(10), ..c };
        assert!(matches!(layout(&narrow, 0.04), Err(ExperimentError::WindowUnderflow { .. })));
    }

    #[test]
    fn scan_shapes_and_determinism() {
        let c = small();
        let a = kpz_scan(&c).unwrap();
        assert_eq!(a.records.len(), 2 * 3 * 6);
        assert_eq!(a.summaries.len(), 6);
        assert_eq!(a.covariances.len(), 6);
        assert_eq!(a.increments.len(), 1);
        assert!(a.records.iter().all(|r| r.value.is_finite() && (0.0..1.0).contains(&r.remainder)));
        assert_eq!(a, kpz_scan(&c).unwrap());
    }

    #[test]
    fn zero_replicas_give_no_records() {
        let c = ExperimentConfig { replicas: 0, ..small() };
        let r = kpz_scan(&c).unwrap();
        assert!(r.records.is_empty() && r.summaries.is_empty() && r.increments.is_empty());
        assert_eq!(r.coefficients.len(), 1);
    }

    #[test]
    fn zero_steps_have_no_checkpoints() {
        let c = ExperimentConfig { steps: Some(0), ..small() };
        assert!(layout(&c, 0.04).unwrap().checkpoints.is_empty());
        assert!(kpz_scan(&c).unwrap().records.is_empty());
    }

    #[test]
    fn coefficient_report_matches_closed_forms() {
        let p = ModelParams::scaled(2, 1, 0.8, 1.0, 1e-4).unwrap();
        let r = coefficient_report(&p, 1e-4, 0.5).unwrap();
        assert!((r.v_star - 1.75).abs() < 1e-12);
        assert!((r.d_star - 0.875).abs() < 1e-12);
        assert!((r.covariance_limit - 0.5).abs() < 1e-12);
    }
}
