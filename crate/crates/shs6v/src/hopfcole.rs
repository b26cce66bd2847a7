//! Microscopic Hopf-Cole transform, the discrete stochastic heat equation
//! it satisfies, exact martingale and quadratic-variation identities, and
//! near-stationary diagnostics.
//!
//! `Z(t, x)` lives on the shifted lattice `x + mu_hat(t) in Z`. Everything
//! here is indexed by the integer site `x + mu_hat(t)`, so no fractional
//! coordinate is ever formed; [`ZField::coordinate`] recovers `x`.

use crate::dynamics::{
    enumerate_step, make_initial, step_recursion, BoundaryMode, DynamicsError, HeightField, InitialKind,
    OccupancyWindow, StepMode, DEFAULT_STATE_LIMIT,
};
use crate::kernels::tilt::TiltFrame;
use crate::kernels::KernelError;
use crate::params::ModelParams;
use crate::rng::RandomEnvironment;
use crate::stationary::{flux_probability, stationary, StationaryError};
use crate::weights::bernoulli_means;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HopfColeError {
    #[error("martingale expressions disagree at site {site}: gap {gap:e}")]
    KernelMismatch { site: i64, gap: f64 },
    #[error("fields are not consecutive or do not share a window: {0}")]
    FieldMismatch(String),
    #[error("site {0} lies outside the window")]
    OutsideWindow(i64),
    #[error("the identity needs an empty region left of the window (no inflow)")]
    InflowPresent,
    #[error("parameters carry no weak-asymmetry scaling")]
    NotScaled,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Stationary(#[from] StationaryError),
}

/// Mismatch threshold for the two expressions of the martingale increment.
pub const MISMATCH_TOL: f64 = 1e-8;

/// `Z(t, x) = lambda_hat(t) q^{-(N(t, x + mu_hat(t)) - rho (x + mu_hat(t)))}`, stored as a logarithm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZField {
    pub t: i64,
    pub q: f64,
    pub rho: f64,
    pub log_lambda_hat: f64,
    pub mu_hat: f64,
    pub heights: HeightField,
}

impl ZField {
    pub fn from_heights(q: f64, heights: HeightField, frame: &TiltFrame) -> Self {
        let t = heights.t;
        Self { t, q, rho: frame.rho, log_lambda_hat: frame.log_lambda_hat(t), mu_hat: frame.mu_hat(t), heights }
    }

    /// `log Z(t, site - mu_hat(t))`.
    pub fn log_at(&self, site: i64) -> f64 {
        self.log_lambda_hat + self.q.ln() * (self.rho * site as f64 - self.heights.at(site) as f64)
    }

    pub fn at(&self, site: i64) -> f64 {
        self.log_at(site).exp()
    }

    /// `eta~(t, x) = eta(t, x + mu_hat(t))`.
    pub fn eta(&self, site: i64) -> usize {
        self.heights.eta(site)
    }

    /// The point `x` of `Xi(t)` at this site.
    pub fn coordinate(&self, site: i64) -> f64 {
        site as f64 - self.mu_hat
    }

    pub fn sites(&self) -> std::ops::RangeInclusive<i64> {
        self.heights.x_left..=self.heights.x_left + self.heights.increments.len() as i64 - 1
    }
}

pub fn z_transform(params: &ModelParams, heights: &HeightField, frame: &TiltFrame) -> ZField {
    ZField::from_heights(params.q, heights.clone(), frame)
}

/// Largest log-space gap in `Z(t+1, x - mu(t)) = lambda(t) Z(t, x) q^{K(t, x + mu_hat(t))}`
/// over the window.
pub fn one_step_gap(params: &ModelParams, frame: &TiltFrame, before: &ZField, after: &ZField) -> f64 {
    let log_lambda = frame.step(before.t).lambda.ln();
    before
        .sites()
        .map(|site| {
            let k = (before.heights.at(site) - after.heights.at(site)) as f64;
            (after.log_at(site) - (log_lambda + before.log_at(site) + k * params.q.ln())).abs()
        })
        .fold(0.0, f64::max)
}

/// `(p(t+1, t) * Z(t))(x - mu(t))` at `site = x + mu_hat(t)`, assuming the
/// region left of the window is empty. The tail beyond the window's left
/// edge is summed in closed form.
pub fn heat_step(params: &ModelParams, frame: &TiltFrame, z: &ZField, site: i64) -> f64 {
    let t = z.t;
    let lambda = frame.step(t).lambda;
    let qr = params.q.powf(frame.rho);
    let a = params.alpha_at(t);
    let theta = params.theta_at(t);
    let first_jump = a * (1.0 - params.q) / (1.0 + a) * (1.0 - theta);
    let inside = (site - z.heights.x_left + 1).max(0);
    let mut sum = 0.0;
    let mut pmf = (1.0 + params.q * a) / (1.0 + a);
    let mut tilt = 1.0;
    for n in 0..inside {
        sum += pmf * tilt * z.at(site - n);
        pmf = if n == 0 { first_jump } else { pmf * theta };
        tilt *= qr;
    }
    // left of the window N is constant, so q^{rho n} Z(site - n) is constant too
    let tail_mass = if inside == 0 { 1.0 } else { first_jump * theta.powi(inside as i32 - 1) / (1.0 - theta) };
    sum += tail_mass * (z.log_at(site - inside) + qr.ln() * inside as f64).exp();
    lambda * sum
}

/// `E[K(t, y) | F(t)]` for the window sites by the mean flux recursion.
pub fn mean_flux(params: &ModelParams, heights: &HeightField, inflow_mean: f64) -> Vec<f64> {
    let a = params.alpha_at(heights.t);
    let mut m = inflow_mean;
    heights
        .increments
        .iter()
        .map(|&eta| {
            let (p_b, p_bp) = bernoulli_means(params, a, eta);
            m = m * (p_bp - p_b) + p_b;
            m
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MartingaleDecomp {
    pub site: i64,
    /// `Z(t+1, x - mu(t)) - (p * Z)(x - mu(t))`.
    pub m_direct: f64,
    /// `lambda(t) (q - 1) Z(t, x) Kbar(t, x + mu_hat(t))`.
    pub m_flux: f64,
    pub theta1: f64,
    pub theta2: f64,
}

/// `(Theta_1, Theta_2)` at a site.
pub fn thetas(params: &ModelParams, frame: &TiltFrame, z: &ZField, site: i64) -> (f64, f64) {
    let lz = frame.step(z.t).lambda * z.at(site);
    let pz = heat_step(params, frame, z, site);
    (params.q * lz - pz, pz - lz)
}

fn check_consecutive(before: &ZField, after: &ZField) -> Result<(), HopfColeError> {
    if after.t != before.t + 1 || after.heights.x_left != before.heights.x_left {
        return Err(HopfColeError::FieldMismatch(format!("t = {} and {}", before.t, after.t)));
    }
    Ok(())
}

/// Both expressions of the martingale increment of the discrete SHE at every
/// window site. Fails with `KernelMismatch` when they disagree.
pub fn she_decompose(
    params: &ModelParams,
    frame: &TiltFrame,
    before: &ZField,
    after: &ZField,
) -> Result<Vec<MartingaleDecomp>, HopfColeError> {
    check_consecutive(before, after)?;
    let lambda = frame.step(before.t).lambda;
    let means = mean_flux(params, &before.heights, 0.0);
    before
        .sites()
        .zip(means)
        .map(|(site, mean)| {
            let k = (before.heights.at(site) - after.heights.at(site)) as f64;
            let (theta1, theta2) = thetas(params, frame, before, site);
            let m_direct = after.at(site) - heat_step(params, frame, before, site);
            let m_flux = lambda * (params.q - 1.0) * before.at(site) * (k - mean);
            let gap = (m_direct - m_flux).abs();
            if gap > MISMATCH_TOL * before.at(site).max(1.0) {
                return Err(HopfColeError::KernelMismatch { site, gap });
            }
            Ok(MartingaleDecomp { site, m_direct, m_flux, theta1, theta2 })
        })
        .collect()
}

fn require_empty_left(window: &OccupancyWindow, params: &ModelParams, t: i64) -> Result<(), HopfColeError> {
    if window.mode.inflow_probability(params.phase(t)) > 0.0 {
        return Err(HopfColeError::InflowPresent);
    }
    Ok(())
}

/// Exact law of the next field, one entry per outcome with its probability.
fn next_fields(
    params: &ModelParams,
    frame: &TiltFrame,
    window: &OccupancyWindow,
    t: i64,
) -> Result<(ZField, Vec<(ZField, f64)>), HopfColeError> {
    require_empty_left(window, params, t)?;
    let before = ZField::from_heights(params.q, HeightField::from_window(t, window, 0), frame);
    let law = enumerate_step(params, window, StepMode::Unfused { t }, DEFAULT_STATE_LIMIT)?;
    let after = law
        .outcomes
        .into_iter()
        .map(|o| {
            let h = HeightField { t: t + 1, x_left: window.x_left, base: 0, increments: o.values, flux_log: None };
            (ZField::from_heights(params.q, h, frame), o.prob)
        })
        .collect();
    Ok((before, after))
}

/// `E[M(t, x) | F(t)]` at every window site by exhaustive one-step enumeration.
pub fn martingale_means(
    params: &ModelParams,
    frame: &TiltFrame,
    window: &OccupancyWindow,
    t: i64,
) -> Result<Vec<(i64, f64)>, HopfColeError> {
    let (before, outcomes) = next_fields(params, frame, window, t)?;
    Ok(before
        .sites()
        .map(|site| {
            let pz = heat_step(params, frame, &before, site);
            (site, outcomes.iter().map(|(z, p)| p * (z.at(site) - pz)).sum())
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticVariationReport {
    pub site1: i64,
    pub site2: i64,
    /// `E[M(t, x1) M(t, x2) | F(t)]` by enumeration.
    pub lhs: f64,
    /// `(q^rho theta_t)^{|x1 - x2|} Theta_1 Theta_2` at `x1 ^ x2`.
    pub rhs: f64,
    pub gap: f64,
}

pub fn quadratic_variation_check(
    params: &ModelParams,
    frame: &TiltFrame,
    window: &OccupancyWindow,
    t: i64,
    site1: i64,
    site2: i64,
) -> Result<QuadraticVariationReport, HopfColeError> {
    for s in [site1, site2] {
        if !window.contains(s) {
            return Err(HopfColeError::OutsideWindow(s));
        }
    }
    let (before, outcomes) = next_fields(params, frame, window, t)?;
    let p1 = heat_step(params, frame, &before, site1);
    let p2 = heat_step(params, frame, &before, site2);
    let lhs = outcomes.iter().map(|(z, p)| p * (z.at(site1) - p1) * (z.at(site2) - p2)).sum();
    let low = site1.min(site2);
    let (th1, th2) = thetas(params, frame, &before, low);
    let ratio = params.q.powf(frame.rho) * params.theta_at(t);
    let rhs = ratio.powi((site1 - site2).unsigned_abs() as i32) * th1 * th2;
    Ok(QuadraticVariationReport { site1, site2, lhs, rhs, gap: (lhs - rhs).abs() })
}

/// Largest gaps of the exact discrete SHE identities along a sampled path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SheCheckReport {
    pub width: usize,
    pub steps: usize,
    /// `max |E[M(t, x) | F(t)]|` by enumeration.
    pub martingale_mean_gap: f64,
    /// Largest gap of the quadratic-variation identity over site pairs.
    pub quadratic_variation_gap: f64,
    /// Largest relative gap of `Theta_1 + Theta_2 = lambda(t) (q - 1) Z`.
    pub theta_sum_gap: f64,
    /// Largest log-space gap of the one-step multiplicative relation.
    pub one_step_gap: f64,
    /// Largest gap between the two expressions of the martingale increment.
    pub decomposition_gap: f64,
}

impl SheCheckReport {
    pub fn max_gap(&self) -> f64 {
        [
            self.martingale_mean_gap,
            self.quadratic_variation_gap,
            self.theta_sum_gap,
            self.one_step_gap,
            self.decomposition_gap,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Samples product stationary data on `width` sites (nothing enters on the
/// left, lines leave on the right) and checks every exact identity at each
/// of `steps` times of a random path, enumerating the next step each time.
pub fn she_check(
    params: &ModelParams,
    rho: f64,
    width: usize,
    steps: usize,
    seed: u64,
) -> Result<SheCheckReport, HopfColeError> {
    let frame = TiltFrame::new(params, rho)?;
    let env = RandomEnvironment::new(seed);
    let pmf = stationary(params, rho)?.pmf;
    let mode = BoundaryMode::Truncated { inflow: Vec::new() };
    let mut window = make_initial(&InitialKind::Product { pmf }, 0, width, mode, params, &env);
    let mut heights = HeightField::from_window(0, &window, 0);
    let mut report = SheCheckReport {
        width,
        steps,
        martingale_mean_gap: 0.0,
        quadratic_variation_gap: 0.0,
        theta_sum_gap: 0.0,
        one_step_gap: 0.0,
        decomposition_gap: 0.0,
    };
    for _ in 0..steps {
        let t = heights.t;
        let before = ZField::from_heights(params.q, heights.clone(), &frame);
        for (_, m) in martingale_means(params, &frame, &window, t)? {
            report.martingale_mean_gap = report.martingale_mean_gap.max(m.abs());
        }
        for a in before.sites() {
            for b in a..=*before.sites().end() {
                let r = quadratic_variation_check(params, &frame, &window, t, a, b)?;
                report.quadratic_variation_gap = report.quadratic_variation_gap.max(r.gap);
            }
            let (th1, th2) = thetas(params, &frame, &before, a);
            let want = frame.step(t).lambda * (params.q - 1.0) * before.at(a);
            report.theta_sum_gap = report.theta_sum_gap.max(((th1 + th2) / want - 1.0).abs());
        }
        let (h, w) = step_recursion(params, &heights, &window, t, &env)?;
        let after = ZField::from_heights(params.q, h.clone(), &frame);
        report.one_step_gap = report.one_step_gap.max(one_step_gap(params, &frame, &before, &after));
        for d in she_decompose(params, &frame, &before, &after)? {
            report.decomposition_gap = report.decomposition_gap.max((d.m_direct - d.m_flux).abs());
        }
        heights = h;
        window = w;
    }
    Ok(report)
}

/// The time-decorrelation target
/// `tau(s) = rho(I-rho)/I^2 * (b(a+1) - (a-1)) / (b a - (a-2))`, `a = I + 2 mod(s)`.
pub fn tau(params: &ModelParams, s: i64) -> Result<f64, HopfColeError> {
    let sc = params.scaling.ok_or(HopfColeError::NotScaled)?;
    let i = params.max_occupancy as f64;
    let rho = sc.density;
    let b = sc.stay_probability;
    let a = i + 2.0 * params.phase(s) as f64;
    Ok(rho * (i - rho) / (i * i) * (b * (a + 1.0) - (a - 1.0)) / (b * a - (a - 2.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauTrendPoint {
    pub epsilon: f64,
    /// Mean of `eps^{-1} Theta_1 Theta_2 / Z^2 - tau(s)` over sites and steps.
    pub mean_excess: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Stationary Monte Carlo average of `eps^{-1} Theta_1 Theta_2 / Z^2 - tau(s)`.
///
/// The window is a truncated cut of stationary data with stationary inflow;
/// the observation sites sit `margin` sites from the left edge so that the
/// empty-left closure of the heat step is negligible.
pub fn tau_trend(
    params: &ModelParams,
    width: usize,
    margin: usize,
    steps: usize,
    seed: u64,
) -> Result<TauTrendPoint, HopfColeError> {
    let sc = params.scaling.ok_or(HopfColeError::NotScaled)?;
    let rho = sc.density;
    let dist = stationary(params, rho)?;
    let frame = TiltFrame::new(params, rho)?;
    let inflow = (0..params.line_capacity as i64).map(|t| flux_probability(params, dist.chi, t)).collect();
    let env = RandomEnvironment::new(seed);
    let mut window = make_initial(
        &InitialKind::Product { pmf: dist.pmf.clone() },
        0,
        width,
        BoundaryMode::Truncated { inflow },
        params,
        &env,
    );
    let mut heights = HeightField::from_window(0, &window, 0);
    let sites: Vec<i64> = (margin as i64..width as i64).step_by(4).collect();
    let (mut sum, mut sum_sq, mut n) = (0.0, 0.0, 0usize);
    for _ in 0..steps {
        let t = heights.t;
        // the frame only enters through ratios here, so the drift offset is irrelevant
        let z = ZField::from_heights(params.q, heights.clone(), &frame);
        let target = tau(params, t)?;
        for &site in &sites {
            let (th1, th2) = thetas(params, &frame, &z, site);
            let zz = z.at(site);
            let v = th1 * th2 / (sc.epsilon * zz * zz) - target;
            sum += v;
            sum_sq += v * v;
            n += 1;
        }
        let (h, w) = step_recursion(params, &heights, &window, t, &env)?;
        heights = h;
        window = w;
    }
    let mean = sum / n as f64;
    // samples are correlated; the naive error is reported as a lower bound
    let se = ((sum_sq / n as f64 - mean * mean).max(0.0) / n as f64).sqrt();
    Ok(TauTrendPoint { epsilon: sc.epsilon, mean_excess: mean, std_error: se, samples: n })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NearStationaryReport {
    pub moment: u32,
    pub exponent: f64,
    /// Fitted `u` in `||Z(0, x)||_n <= C e^{u eps |x|}`.
    pub growth: f64,
    pub constant: f64,
    /// Fitted `C` in `||Z(0,x) - Z(0,x')||_n <= C (eps|x-x'|)^a e^{u eps(|x|+|x'|)}`.
    pub increment_constant: f64,
    pub passes: bool,
}

/// Declared moment bounds for [`near_stationary_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEnvelope {
    pub moment: u32,
    pub exponent: f64,
    pub max_constant: f64,
    pub max_growth: f64,
}

/// Moment envelopes of `Z(0, .)` on `|x| <= 1/eps` from `replicas` samples
/// of the initial data, against the declared bounds.
pub fn near_stationary_check(
    params: &ModelParams,
    kind: &InitialKind,
    envelope: MomentEnvelope,
    replicas: u64,
    seed: u64,
) -> Result<NearStationaryReport, HopfColeError> {
    let MomentEnvelope { moment, exponent, max_constant, max_growth } = envelope;
    let sc = params.scaling.ok_or(HopfColeError::NotScaled)?;
    let eps = sc.epsilon;
    let reach = (1.0 / eps).round() as i64;
    let width = (2 * reach + 1) as usize;
    let frame = TiltFrame::new(params, sc.density)?;
    let root = RandomEnvironment::new(seed);
    let grid: Vec<i64> = (-reach..=reach).step_by((reach as usize / 16).max(1)).collect();
    let mut abs_moment = vec![0.0; grid.len()];
    let mut inc_moment = vec![0.0; grid.len()];
    for r in 0..replicas {
        let w = make_initial(kind, -reach, width, BoundaryMode::LeftFinite, params, &root.replica(r));
        let base = -(w.count_up_to(0) as i64);
        let z = ZField::from_heights(params.q, HeightField::from_window(0, &w, base), &frame);
        let z0 = z.at(0);
        for (k, &x) in grid.iter().enumerate() {
            let zx = z.at(x);
            abs_moment[k] += zx.powi(moment as i32);
            inc_moment[k] += (zx - z0).abs().powi(moment as i32);
        }
    }
    let norm = |m: f64| (m / replicas as f64).powf(1.0 / moment as f64);
    let centre = grid.iter().position(|&x| x == 0).unwrap_or(0);
    let m0 = norm(abs_moment[centre]);
    let mut growth: f64 = 0.0;
    for (k, &x) in grid.iter().enumerate() {
        if x != 0 {
            growth = growth.max((norm(abs_moment[k]) / m0).ln() / (eps * x.abs() as f64));
        }
    }
    let constant = m0;
    let mut increment_constant: f64 = 0.0;
    for (k, &x) in grid.iter().enumerate() {
        if x != 0 {
            let env = (eps * x.abs() as f64).powf(exponent) * (growth * eps * x.abs() as f64).exp();
            increment_constant = increment_constant.max(norm(inc_moment[k]) / env);
        }
    }
    let passes = constant <= max_constant && increment_constant <= max_constant && growth <= max_growth;
    Ok(NearStationaryReport { moment, exponent, growth, constant, increment_constant, passes })
}
