//! Model parameter pack: asymmetry `q`, spins, the vertex parameter `alpha`
//! and the optional weakly asymmetric scaling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("q must be finite and positive, got {0}")]
    InvalidQ(f64),
    #[error("spins must be at least 1, got max_occupancy={max_occupancy}, line_capacity={line_capacity}")]
    InvalidSpin { max_occupancy: usize, line_capacity: usize },
    #[error("alpha must be finite and nonzero, got {0}")]
    InvalidAlpha(f64),
    #[error(
        "stochasticity violated: need q > 1 and {lower} < alpha < 0 (lower = -q^-(I+J-1)), got q={q}, alpha={alpha}"
    )]
    NotStochastic { q: f64, alpha: f64, lower: f64 },
    #[error("scaled mode violated: {0}")]
    Scaling(String),
}

/// Weakly asymmetric scaling data: `q = exp(sqrt(epsilon))` and
/// `alpha` is solved from the one-particle stay probability `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    /// `b = (1 + alpha q) / (1 + alpha)`.
    pub stay_probability: f64,
    /// Stationary density in `(0, I)`.
    pub density: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub q: f64,
    /// Vertical spin: maximal number of particles per site.
    pub max_occupancy: usize,
    /// Horizontal spin: lines carried per fused time step.
    pub line_capacity: usize,
    pub alpha: f64,
    /// Always `q^(-max_occupancy)`.
    pub nu: f64,
    pub scaling: Option<Scaling>,
}

impl ModelParams {
    /// Builds a parameter pack without asserting stochasticity.
    pub fn new(q: f64, max_occupancy: usize, line_capacity: usize, alpha: f64) -> Result<Self, ParamError> {
        if !(q.is_finite() && q > 0.0) {
            return Err(ParamError::InvalidQ(q));
        }
        if max_occupancy == 0 || line_capacity == 0 {
            return Err(ParamError::InvalidSpin { max_occupancy, line_capacity });
        }
        if !alpha.is_finite() || alpha == 0.0 {
            return Err(ParamError::InvalidAlpha(alpha));
        }
        Ok(Self { q, max_occupancy, line_capacity, alpha, nu: q.powi(-(max_occupancy as i32)), scaling: None })
    }

    /// Builds a parameter pack and asserts the stochasticity condition.
    pub fn stochastic(q: f64, max_occupancy: usize, line_capacity: usize, alpha: f64) -> Result<Self, ParamError> {
        let p = Self::new(q, max_occupancy, line_capacity, alpha)?;
        p.check_stochastic()?;
        Ok(p)
    }

    /// Weakly asymmetric scaling: `q = exp(sqrt(epsilon))`, `alpha = (1-b)/(b-q)`.
    pub fn scaled(
        max_occupancy: usize,
        line_capacity: usize,
        stay_probability: f64,
        density: f64,
        epsilon: f64,
    ) -> Result<Self, ParamError> {
        let b = stay_probability;
        let total = (max_occupancy + line_capacity) as f64;
        let b_min = (total - 2.0) / (total - 1.0);
        if !(b > b_min && b < 1.0) {
            return Err(ParamError::Scaling(format!("need {b_min} < b < 1, got b={b}")));
        }
        if !(density > 0.0 && density < max_occupancy as f64) {
            return Err(ParamError::Scaling(format!("need 0 < rho < {max_occupancy}, got rho={density}")));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(ParamError::Scaling(format!("need epsilon > 0, got {epsilon}")));
        }
        let q = epsilon.sqrt().exp();
        let alpha = (1.0 - b) / (b - q);
        let mut p = Self::stochastic(q, max_occupancy, line_capacity, alpha)?;
        p.scaling = Some(Scaling { stay_probability: b, density, epsilon });
        Ok(p)
    }

    /// Lower end of the admissible `alpha` interval, `-q^-(I+J-1)`.
    pub fn alpha_lower_bound(&self) -> f64 {
        -self.q.powi(-((self.max_occupancy + self.line_capacity - 1) as i32))
    }

    /// Stochasticity condition: `q > 1` and `-q^-(I+J-1) < alpha < 0`.
    pub fn condition1(&self) -> bool {
        self.q > 1.0 && self.alpha > self.alpha_lower_bound() && self.alpha < 0.0
    }

    pub fn check_stochastic(&self) -> Result<(), ParamError> {
        if self.condition1() {
            Ok(())
        } else {
            Err(ParamError::NotStochastic { q: self.q, alpha: self.alpha, lower: self.alpha_lower_bound() })
        }
    }

    pub fn spin(&self) -> i32 {
        self.max_occupancy as i32
    }

    /// `t mod J`, the phase of unfused time `t` inside a fused step.
    pub fn phase(&self, t: i64) -> usize {
        t.rem_euclid(self.line_capacity as i64) as usize
    }

    /// `alpha q^(t mod J)`.
    pub fn alpha_at(&self, t: i64) -> f64 {
        self.alpha * self.q.powi(self.phase(t) as i32)
    }

    /// Geometric ratio of a horizontal line crossing an empty site at time `t`:
    /// `(nu + alpha(t)) / (1 + alpha(t))`.
    pub fn theta_at(&self, t: i64) -> f64 {
        let a = self.alpha_at(t);
        (self.nu + a) / (1.0 + a)
    }

    /// Supremum of `theta_at` over a period.
    pub fn theta_sup(&self) -> f64 {
        (0..self.line_capacity as i64).map(|t| self.theta_at(t)).fold(0.0, f64::max)
    }

    /// Per-site influence decay of the coupled environment:
    /// `sup_t theta(t) q^I`, the worst case of `|P(B'=1) - P(B=1)|`.
    pub fn influence_ratio(&self) -> f64 {
        (0..self.line_capacity as i64)
            .map(|t| {
                let a = self.alpha_at(t);
                (1.0 + a * self.q.powi(self.spin())) / (1.0 + a)
            })
            .fold(0.0, f64::max)
    }

    /// Parameters of the unfused (J = 1) model at the same `q`, `I`, `alpha`.
    pub fn unfused(&self) -> Self {
        Self { line_capacity: 1, ..*self }
    }

    pub fn density(&self) -> Option<f64> {
        self.scaling.map(|s| s.density)
    }
}
