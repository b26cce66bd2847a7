//! The one-parameter family of product stationary measures, the fugacity
//! solver, and the scaling-theory observables (current and integrated
//! covariance) with the resulting KPZ coefficients.

use crate::dynamics::{enumerate_step, BoundaryMode, DynamicsError, OccupancyWindow, StepMode, DEFAULT_STATE_LIMIT};
use crate::kernels::tilt::fused_tilt;
use crate::kernels::KernelError;
use crate::params::ModelParams;
use crate::qspecial::q_pochhammer;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StationaryError {
    #[error("density {rho} outside (0, {max})")]
    Bracket { rho: f64, max: usize },
    #[error("q = {0} must exceed 1")]
    InvalidQ(f64),
    #[error("scaled parameters required")]
    NotScaled,
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Single-site stationary law on `{0..I}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryDist {
    pub rho: f64,
    /// Negative fugacity.
    pub chi: f64,
    pub pmf: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

fn density_of(params: &ModelParams, chi: f64) -> f64 {
    (1..=params.max_occupancy as i32).map(|i| chi / (chi - params.q.powi(i))).sum()
}

fn density_slope(params: &ModelParams, chi: f64) -> f64 {
    (1..=params.max_occupancy as i32)
        .map(|i| {
            let qi = params.q.powi(i);
            -qi / (chi - qi).powi(2)
        })
        .sum()
}

/// Negative root of `sum_i chi / (chi - q^i) = rho`.
///
/// The left side decreases from `I` (at `-inf`) to `0` (at `0-`), so the
/// root is bracketed; bisection to ulp level is polished by two Newton steps.
pub fn solve_chi(params: &ModelParams, rho: f64) -> Result<f64, StationaryError> {
    let max = params.max_occupancy;
    if !(rho > 0.0 && rho < max as f64) {
        return Err(StationaryError::Bracket { rho, max });
    }
    if params.q <= 1.0 {
        return Err(StationaryError::InvalidQ(params.q));
    }
    let mut lo = -1.0;
    while density_of(params, lo) < rho {
        lo *= 2.0;
    }
    let mut hi = 0.0;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if density_of(params, mid) > rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut chi = 0.5 * (lo + hi);
    for _ in 0..2 {
        let step = (density_of(params, chi) - rho) / density_slope(params, chi);
        let next = chi - step;
        if next < 0.0 && next.is_finite() {
            chi = next;
        }
    }
    Ok(chi)
}

/// `pi(i) ~ (nu; q)_i / (q; q)_i chi^i`, normalized by the finite sum.
pub fn pi_rho(params: &ModelParams, chi: f64) -> StationaryDist {
    let q = params.q;
    let raw: Vec<f64> = (0..=params.max_occupancy as i64)
        .map(|i| {
            q_pochhammer(params.nu, q, i).expect("positive order") / q_pochhammer(q, q, i).expect("positive order")
                * chi.powi(i as i32)
        })
        .collect();
    let z: f64 = raw.iter().sum();
    let pmf: Vec<f64> = raw.iter().map(|w| w / z).collect();
    let mean: f64 = pmf.iter().enumerate().map(|(i, p)| i as f64 * p).sum();
    let variance: f64 = pmf.iter().enumerate().map(|(i, p)| (i as f64 - mean).powi(2) * p).sum();
    StationaryDist { rho: density_of(params, chi), chi, pmf, mean, variance }
}

/// Solves for the fugacity and builds the stationary law at density `rho`.
pub fn stationary(params: &ModelParams, rho: f64) -> Result<StationaryDist, StationaryError> {
    let chi = solve_chi(params, rho)?;
    let mut d = pi_rho(params, chi);
    d.rho = rho;
    Ok(d)
}

/// Closed-form variance `rho - sum_i chi^2 / (q^i - chi)^2`.
pub fn variance_formula(params: &ModelParams, rho: f64, chi: f64) -> f64 {
    rho - (1..=params.max_occupancy as i32).map(|i| chi * chi / (params.q.powi(i) - chi).powi(2)).sum::<f64>()
}

/// `E[q^eta] = (1 - chi) / (1 - chi nu)` under the stationary law.
pub fn q_moment(params: &ModelParams, chi: f64) -> f64 {
    (1.0 - chi) / (1.0 - chi * params.nu)
}

/// Probability of a line crossing a bond at time `t` under the product law.
pub fn flux_probability(params: &ModelParams, chi: f64, t: i64) -> f64 {
    let a = params.alpha_at(t);
    a * chi / (1.0 + a * chi)
}

fn scaling_of(params: &ModelParams) -> Result<crate::params::Scaling, StationaryError> {
    params.scaling.ok_or(StationaryError::NotScaled)
}

/// Steady-state current `eps^-1/2 (sum_k P(flux at phase k) - rho mu)` over one fused step,
/// with `mu` the fused drift at the same density.
pub fn steady_current_j(params: &ModelParams, rho: f64) -> Result<f64, StationaryError> {
    let s = scaling_of(params)?;
    let chi = solve_chi(params, rho)?;
    let flux: f64 = (0..params.line_capacity as i64).map(|k| flux_probability(params, chi, k)).sum();
    let mu = fused_tilt(params, rho)?.mu;
    Ok((flux - rho * mu) / s.epsilon.sqrt())
}

/// Integrated covariance: the stationary single-site variance.
pub fn integrated_covariance_a(params: &ModelParams, rho: f64) -> Result<f64, StationaryError> {
    Ok(stationary(params, rho)?.variance)
}

/// Central second difference of the current with step `h`.
pub fn current_second_derivative(params: &ModelParams, rho: f64, h: f64) -> Result<f64, StationaryError> {
    let jp = steady_current_j(params, rho + h)?;
    let j0 = steady_current_j(params, rho)?;
    let jm = steady_current_j(params, rho - h)?;
    Ok((jp - 2.0 * j0 + jm) / (h * h))
}

/// Default difference step `max(1e-3, eps^(1/4))`.
pub fn default_difference_step(params: &ModelParams) -> f64 {
    params.scaling.map_or(1e-3, |s| s.epsilon.powf(0.25).max(1e-3))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KpzCoefficients {
    pub v_star: f64,
    pub d_star: f64,
}

/// Limit coefficients `V* = ((I+J) b - (I+J-2)) / (I^2 (1-b))` and
/// `D* = rho (I - rho) / I * V*`.
pub fn kpz_coefficients(params: &ModelParams) -> Result<KpzCoefficients, StationaryError> {
    let s = scaling_of(params)?;
    let (i, j, b) = (params.max_occupancy as f64, params.line_capacity as f64, s.stay_probability);
    let v_star = ((i + j) * b - (i + j - 2.0)) / (i * i * (1.0 - b));
    Ok(KpzCoefficients { v_star, d_star: s.density * (i - s.density) / i * v_star })
}

/// Leading small-`eps` value of the current, `rho^2 J ((I+J) b - (I+J-2)) / (2 (b-1) I^2)`.
pub fn current_limit(params: &ModelParams, rho: f64) -> Result<f64, StationaryError> {
    let s = scaling_of(params)?;
    let (i, j, b) = (params.max_occupancy as f64, params.line_capacity as f64, s.stay_probability);
    Ok(rho * rho * j * ((i + j) * b - (i + j - 2.0)) / (2.0 * (b - 1.0) * i * i))
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryReport {
    pub params: ModelParams,
    pub dist: StationaryDist,
    pub current: f64,
    pub integrated_covariance: f64,
    pub current_second_derivative: f64,
    pub difference_step: f64,
    pub coefficients: KpzCoefficients,
}

/// Everything the `stationary` subcommand prints.
pub fn stationary_report(params: &ModelParams, rho: f64, h: f64) -> Result<StationaryReport, StationaryError> {
    let dist = stationary(params, rho)?;
    Ok(StationaryReport {
        params: *params,
        current: steady_current_j(params, rho)?,
        integrated_covariance: dist.variance,
        current_second_derivative: current_second_derivative(params, rho, h)?,
        difference_step: h,
        coefficients: kpz_coefficients(params)?,
        dist,
    })
}

/// Exact one-step comparison of the law after a step with the product law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityCheck {
    pub width: usize,
    pub t: i64,
    /// Site whose marginal is reported separately.
    pub central_site: usize,
    /// `max_i |P(eta'(c) = i) - pi(i)|` at the central site.
    pub central_gap: f64,
    /// Same over every window site.
    pub marginal_gap: f64,
    /// Total variation between the joint law of the window and the right-edge
    /// flux, and the product of `pi` and `Bernoulli(p)`.
    pub joint_gap: f64,
    /// `max_y |P(K(t, y) = 1) - p|` over the window bonds.
    pub flux_gap: f64,
    /// The predicted flux probability `p = alpha(t) chi / (1 + alpha(t) chi)`.
    pub flux_probability: f64,
    /// Probability lost to truncation; zero because the left of the window
    /// enters as an exact `Bernoulli(p)` inflow independent of the window.
    pub tail_mass: f64,
}

/// Starts from product stationary data on `width` sites with independent
/// `Bernoulli(p)` inflow, enumerates every initial configuration and one
/// unfused step at time `t`, and compares the result with the product law.
pub fn stationarity_check(
    params: &ModelParams,
    rho: f64,
    width: usize,
    t: i64,
) -> Result<StationarityCheck, StationaryError> {
    let dist = stationary(params, rho)?;
    let p = flux_probability(params, dist.chi, t);
    let inflow = vec![p; params.line_capacity];
    let states = params.max_occupancy + 1;
    let mut joint: std::collections::BTreeMap<(Vec<usize>, usize), f64> = Default::default();
    let mut marginals = vec![vec![0.0; states]; width];
    let mut flux_one = vec![0.0; width];
    let mut config = vec![0usize; width];
    loop {
        let weight: f64 = config.iter().map(|&e| dist.pmf[e]).product();
        let before = OccupancyWindow::new(0, config.clone(), BoundaryMode::Truncated { inflow: inflow.clone() });
        let law = enumerate_step(params, &before, StepMode::Unfused { t }, DEFAULT_STATE_LIMIT)?;
        for o in &law.outcomes {
            let w = weight * o.prob;
            *joint.entry((o.values.clone(), o.exits)).or_default() += w;
            for (y, (&e, k)) in o.values.iter().zip(o.flux(&before)).enumerate() {
                marginals[y][e] += w;
                if k == 1 {
                    flux_one[y] += w;
                }
            }
        }
        // next configuration in mixed radix
        let mut pos = 0;
        while pos < width && config[pos] == states - 1 {
            config[pos] = 0;
            pos += 1;
        }
        if pos == width {
            break;
        }
        config[pos] += 1;
    }
    let gap_of = |m: &[f64]| m.iter().zip(&dist.pmf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let central_site = width / 2;
    let joint_gap = 0.5
        * joint
            .iter()
            .map(|((values, exits), w)| {
                let prod: f64 = values.iter().map(|&e| dist.pmf[e]).product();
                let bern = if *exits == 1 { p } else { 1.0 - p };
                (w - prod * bern).abs()
            })
            .sum::<f64>();
    Ok(StationarityCheck {
        width,
        t,
        central_site,
        central_gap: marginals.get(central_site).map_or(0.0, |m| gap_of(m)),
        marginal_gap: marginals.iter().map(|m| gap_of(m)).fold(0.0, f64::max),
        joint_gap,
        flux_gap: flux_one.iter().map(|f| (f - p).abs()).fold(0.0, f64::max),
        flux_probability: p,
        tail_mass: 0.0,
    })
}
