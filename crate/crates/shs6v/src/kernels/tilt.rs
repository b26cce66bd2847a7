//! Tilted and centered one-step walk of the reversed single particle.
//!
//! The untilted jump law at time `k` is `P(0) = (1 + q alpha(k)) / (1 + alpha(k))`
//! and `P(n) = alpha(k)(1-q)/(1+alpha(k)) (1-theta) theta^(n-1)` for `n >= 1`.
//! Tilting by `q^(rho n)` and normalizing gives `lambda(k)`, and centering
//! gives `mu(k)`.

use super::KernelError;
use crate::params::ModelParams;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepTilt {
    pub lambda: f64,
    pub mu: f64,
}

fn tilt_denominators(params: &ModelParams, rho: f64, alpha_k: f64) -> (f64, f64) {
    let q = params.q;
    let qr = q.powf(rho);
    let d0 = 1.0 + alpha_k - qr * (alpha_k + params.nu);
    let d1 = 1.0 + alpha_k * q - qr * (alpha_k * q + params.nu);
    (d0, d1)
}

/// `(lambda(k), mu(k))` at density `rho`.
pub fn step_tilt(params: &ModelParams, rho: f64, k: i64) -> Result<StepTilt, KernelError> {
    let a = params.alpha_at(k);
    let (d0, d1) = tilt_denominators(params, rho, a);
    if d0.abs() < 1e-300 || d1.abs() < 1e-300 {
        return Err(KernelError::DegenerateTilt { k, rho });
    }
    let qr = params.q.powf(rho);
    Ok(StepTilt { lambda: d0 / d1, mu: a * (1.0 - params.q) * (1.0 - params.nu) * qr / (d0 * d1) })
}

/// Fused-step `(lambda, mu)` from their closed forms with `alpha q^J`.
pub fn fused_tilt(params: &ModelParams, rho: f64) -> Result<StepTilt, KernelError> {
    let q = params.q;
    let qj = q.powi(params.line_capacity as i32);
    let qr = q.powf(rho);
    let a = params.alpha;
    let d0 = 1.0 + a - qr * (a + params.nu);
    let dj = 1.0 + a * qj - qr * (a * qj + params.nu);
    if d0.abs() < 1e-300 || dj.abs() < 1e-300 {
        return Err(KernelError::DegenerateTilt { k: params.line_capacity as i64, rho });
    }
    Ok(StepTilt { lambda: d0 / dj, mu: a * qr * (1.0 - qj) * (1.0 - params.nu) / (dj * d0) })
}

/// Untilted jump probability `P(n)` of the reversed particle at time `k`.
pub fn jump_pmf(params: &ModelParams, k: i64, n: usize) -> f64 {
    let a = params.alpha_at(k);
    if n == 0 {
        return (1.0 + params.q * a) / (1.0 + a);
    }
    let theta = params.theta_at(k);
    a * (1.0 - params.q) / (1.0 + a) * (1.0 - theta) * theta.powi(n as i32 - 1)
}

/// Tilted probabilities `P(R(k) = n - mu(k))` for `n = 0..len`.
pub fn tilted_pmf(params: &ModelParams, rho: f64, k: i64, len: usize) -> Result<Vec<f64>, KernelError> {
    let st = step_tilt(params, rho, k)?;
    let qr = params.q.powf(rho);
    Ok((0..len).map(|n| st.lambda * jump_pmf(params, k, n) * qr.powi(n as i32)).collect())
}

/// Cumulative tilt data over unfused time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiltFrame {
    pub rho: f64,
    /// `(lambda(k), mu(k))` for `k = 0..J`.
    pub per_phase: Vec<StepTilt>,
}

impl TiltFrame {
    pub fn new(params: &ModelParams, rho: f64) -> Result<Self, KernelError> {
        let per_phase =
            (0..params.line_capacity as i64).map(|k| step_tilt(params, rho, k)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { rho, per_phase })
    }

    pub fn step(&self, k: i64) -> StepTilt {
        self.per_phase[k.rem_euclid(self.per_phase.len() as i64) as usize]
    }

    /// `prod_{s <= k < t} lambda(k)`.
    pub fn lambda_ratio(&self, t: i64, s: i64) -> f64 {
        (s..t).map(|k| self.step(k).lambda).product()
    }

    /// `sum_{s <= k < t} mu(k)`.
    pub fn mu_diff(&self, t: i64, s: i64) -> f64 {
        (s..t).map(|k| self.step(k).mu).sum()
    }

    /// `lambda_hat(t) = prod_{k < t} lambda(k)`.
    pub fn lambda_hat(&self, t: i64) -> f64 {
        let j = self.per_phase.len() as i64;
        let full: f64 = self.per_phase.iter().map(|s| s.lambda).product();
        full.powi((t / j) as i32) * self.lambda_ratio(t, t - t % j)
    }

    /// `log lambda_hat(t)`, free of underflow for long times.
    pub fn log_lambda_hat(&self, t: i64) -> f64 {
        let j = self.per_phase.len() as i64;
        let full: f64 = self.per_phase.iter().map(|s| s.lambda.ln()).sum();
        full * (t / j) as f64 + (t - t % j..t).map(|k| self.step(k).lambda.ln()).sum::<f64>()
    }

    /// `mu_hat(t) = sum_{k < t} mu(k)`.
    pub fn mu_hat(&self, t: i64) -> f64 {
        let j = self.per_phase.len() as i64;
        let full: f64 = self.per_phase.iter().map(|s| s.mu).sum();
        full * (t / j) as f64 + self.mu_diff(t, t - t % j)
    }
}
