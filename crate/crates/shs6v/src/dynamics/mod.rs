//! Forward dynamics: the sequential vertex update for the unfused and the
//! fused model, the flux recursion driven by the Bernoulli environment,
//! height fields, truncation certificates and exact one-step enumeration.

mod enumerate;
mod initial;

pub use enumerate::{enumerate_step, enumerate_steps, StepLaw, StepMode, StepOutcome, DEFAULT_STATE_LIMIT};
pub use initial::{make_initial, InitialKind};

use crate::params::{ModelParams, ParamError};
use crate::rng::{DrawKind, UniformSource};
use crate::weights::{bernoulli_means, VertexWeightTable, WeightError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("{lines} line(s) would leave the right edge of a left-finite window at time {t}")]
    WindowOverflow { t: i64, lines: usize },
    #[error("state space too large: {outcomes} outcomes exceed the limit {limit}")]
    StateSpaceTooLarge { outcomes: usize, limit: usize },
    #[error("truncation bound {bound:e} exceeds tolerance {tolerance:e} at distance {distance} after {steps} steps")]
    Truncation { bound: f64, tolerance: f64, distance: usize, steps: usize },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// How the window meets the rest of the line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BoundaryMode {
    /// Everything left of the window is empty; lines may not leave on the right.
    LeftFinite,
    /// Window cut out of a bi-infinite configuration. Lines leave freely on the
    /// right. `inflow` holds a per-phase probability of an independent line
    /// entering at the left edge (empty means no inflow, the plain cutoff).
    Truncated { inflow: Vec<f64> },
}

impl BoundaryMode {
    pub fn inflow_probability(&self, phase: usize) -> f64 {
        match self {
            Self::LeftFinite => 0.0,
            Self::Truncated { inflow } if inflow.is_empty() => 0.0,
            Self::Truncated { inflow } => inflow[phase % inflow.len()],
        }
    }
}

/// Occupancies of the sites `x_left .. x_left + values.len()`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupancyWindow {
    pub x_left: i64,
    pub values: Vec<usize>,
    pub mode: BoundaryMode,
}

impl OccupancyWindow {
    pub fn new(x_left: i64, values: Vec<usize>, mode: BoundaryMode) -> Self {
        Self { x_left, values, mode }
    }

    pub fn left_finite(x_left: i64, values: Vec<usize>) -> Self {
        Self::new(x_left, values, BoundaryMode::LeftFinite)
    }

    pub fn empty(x_left: i64, width: usize) -> Self {
        Self::left_finite(x_left, vec![0; width])
    }

    pub fn width(&self) -> usize {
        self.values.len()
    }

    pub fn x_right(&self) -> i64 {
        self.x_left + self.values.len() as i64 - 1
    }

    pub fn contains(&self, x: i64) -> bool {
        x >= self.x_left && x <= self.x_right()
    }

    /// Occupancy at `x`; zero outside the window.
    pub fn eta(&self, x: i64) -> usize {
        if self.contains(x) {
            self.values[(x - self.x_left) as usize]
        } else {
            0
        }
    }

    pub fn particles(&self) -> usize {
        self.values.iter().sum()
    }

    /// Number of particles at sites `<= x` inside the window.
    pub fn count_up_to(&self, x: i64) -> usize {
        if x < self.x_left {
            return 0;
        }
        let end = ((x - self.x_left + 1) as usize).min(self.values.len());
        self.values[..end].iter().sum()
    }

    pub fn validate(&self, params: &ModelParams) -> Result<(), DynamicsError> {
        if let Some(v) = self.values.iter().find(|&&v| v > params.max_occupancy) {
            return Err(DynamicsError::InvalidWindow(format!(
                "occupancy {v} exceeds max_occupancy {}",
                params.max_occupancy
            )));
        }
        Ok(())
    }
}

/// Height samples `N(t, x)` on a window, `N(t, x) = base + sum_{x_left <= y <= x} eta_y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeightField {
    pub t: i64,
    pub x_left: i64,
    /// `N(t, x_left - 1)`.
    pub base: i64,
    pub increments: Vec<usize>,
    /// `K(t-1, y)` for the window sites, recorded by the step that produced this field.
    pub flux_log: Option<Vec<usize>>,
}

impl HeightField {
    pub fn from_window(t: i64, window: &OccupancyWindow, base: i64) -> Self {
        Self { t, x_left: window.x_left, base, increments: window.values.clone(), flux_log: None }
    }

    /// `N(t, x)`; constant continuation outside the window.
    pub fn at(&self, x: i64) -> i64 {
        if x < self.x_left {
            return self.base;
        }
        let end = ((x - self.x_left + 1) as usize).min(self.increments.len());
        self.base + self.increments[..end].iter().sum::<usize>() as i64
    }

    /// Occupancy `N(t, x) - N(t, x-1)`; zero outside the window.
    pub fn eta(&self, x: i64) -> usize {
        if x < self.x_left || x >= self.x_left + self.increments.len() as i64 {
            0
        } else {
            self.increments[(x - self.x_left) as usize]
        }
    }

    pub fn values(&self) -> Vec<i64> {
        let mut acc = self.base;
        self.increments
            .iter()
            .map(|&e| {
                acc += e as i64;
                acc
            })
            .collect()
    }
}

/// Result of one random step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub window: OccupancyWindow,
    /// Lines crossing from `y` to `y + 1` for each window site `y`.
    pub flux: Vec<usize>,
    /// Lines entering at the left edge.
    pub inflow: usize,
}

impl Step {
    /// Lines leaving at the right edge.
    pub fn outflow(&self) -> usize {
        self.flux.last().copied().unwrap_or(self.inflow)
    }
}

fn finish(
    state: &OccupancyWindow,
    values: Vec<usize>,
    flux: Vec<usize>,
    inflow: usize,
    t: i64,
) -> Result<Step, DynamicsError> {
    let out = flux.last().copied().unwrap_or(inflow);
    if out > 0 && state.mode == BoundaryMode::LeftFinite {
        return Err(DynamicsError::WindowOverflow { t, lines: out });
    }
    Ok(Step { window: OccupancyWindow { values, ..state.clone() }, flux, inflow })
}

fn draw_inflow(state: &OccupancyWindow, params: &ModelParams, t: i64, env: &dyn UniformSource) -> usize {
    let p = state.mode.inflow_probability(params.phase(t));
    if p > 0.0 && env.uniform(DrawKind::Inflow, t, state.x_left - 1) < p {
        1
    } else {
        0
    }
}

/// One unfused step at time `t` with parameter `alpha(t)`.
///
/// The site uniform `u` decides `B = 1{u < P(B)}` when no line comes in and
/// `B' = 1{u < P(B')}` when one does, so a single variate drives both.
pub fn step_unfused(
    params: &ModelParams,
    state: &OccupancyWindow,
    t: i64,
    env: &dyn UniformSource,
) -> Result<Step, DynamicsError> {
    let alpha_t = params.alpha_at(t);
    let inflow = draw_inflow(state, params, t, env);
    let us = env.row(DrawKind::Vertex, t, state.x_left, state.width());
    let mut h = inflow;
    let mut values = Vec::with_capacity(state.width());
    let mut flux = Vec::with_capacity(state.width());
    for (&eta, &u) in state.values.iter().zip(&us) {
        let (p_b, p_bp) = bernoulli_means(params, alpha_t, eta);
        let out = if h == 0 { usize::from(u < p_b) } else { usize::from(u < p_bp) };
        values.push(eta + h - out);
        flux.push(out);
        h = out;
    }
    finish(state, values, flux, inflow, t)
}

/// One fused step with the table `L^{(J)}_alpha`, indexed by fused time `t`.
/// Inflow, if any, is a single line drawn with the phase-0 probability.
pub fn step_fused(
    table: &VertexWeightTable,
    state: &OccupancyWindow,
    t: i64,
    env: &dyn UniformSource,
) -> Result<Step, DynamicsError> {
    let inflow = draw_inflow(state, &table.params, 0, env);
    let us = env.row(DrawKind::Vertex, t, state.x_left, state.width());
    let mut h = inflow;
    let mut values = Vec::with_capacity(state.width());
    let mut flux = Vec::with_capacity(state.width());
    for (&eta, &u) in state.values.iter().zip(&us) {
        let (i2, j2) = table.sample(eta, h, u);
        values.push(i2);
        flux.push(j2);
        h = j2;
    }
    finish(state, values, flux, inflow, t)
}

/// Flux recursion `K(t, y) = K(t, y-1) (B' - B) + B` with `N(t+1, y) = N(t, y) - K(t, y)`.
///
/// Pathwise identical to [`step_unfused`] under the same environment.
pub fn step_recursion(
    params: &ModelParams,
    heights: &HeightField,
    state: &OccupancyWindow,
    t: i64,
    env: &dyn UniformSource,
) -> Result<(HeightField, OccupancyWindow), DynamicsError> {
    if heights.x_left != state.x_left || heights.increments != state.values {
        return Err(DynamicsError::InvalidWindow("height field does not match the occupancy window".into()));
    }
    let alpha_t = params.alpha_at(t);
    let inflow = draw_inflow(state, params, t, env) as i64;
    let us = env.row(DrawKind::Vertex, t, state.x_left, state.width());
    let n_old = heights.values();
    let mut k_prev = inflow;
    let mut n_new = Vec::with_capacity(n_old.len());
    let mut flux = Vec::with_capacity(n_old.len());
    for ((&eta, &u), &n) in state.values.iter().zip(&us).zip(&n_old) {
        let (p_b, p_bp) = bernoulli_means(params, alpha_t, eta);
        let b = i64::from(u < p_b);
        let bp = i64::from(u < p_bp);
        let k = k_prev * (bp - b) + b;
        n_new.push(n - k);
        flux.push(k as usize);
        k_prev = k;
    }
    if k_prev > 0 && state.mode == BoundaryMode::LeftFinite {
        return Err(DynamicsError::WindowOverflow { t, lines: k_prev as usize });
    }
    let base = heights.base - inflow;
    let mut prev = base;
    let increments: Vec<usize> = n_new
        .iter()
        .map(|&n| {
            let e = (n - prev) as usize;
            prev = n;
            e
        })
        .collect();
    let window = OccupancyWindow { values: increments.clone(), ..state.clone() };
    let field = HeightField { t: heights.t + 1, x_left: heights.x_left, base, increments, flux_log: Some(flux) };
    Ok((field, window))
}

/// Chernoff bound on the probability that the left cutoff influences a site
/// at distance `distance` within `steps` unfused steps.
pub fn truncation_bound(params: &ModelParams, distance: usize, steps: usize) -> f64 {
    let r = params.influence_ratio();
    if r <= 0.0 {
        return 0.0;
    }
    let per_step = (1.0 - r) / (1.0 - r.sqrt());
    (per_step.ln() * steps as f64 + 0.5 * r.ln() * distance as f64).exp().min(1.0)
}

/// Smallest distance from the cutoff certified to `tolerance` after `steps` steps.
pub fn certified_distance(params: &ModelParams, steps: usize, tolerance: f64) -> usize {
    let mut d = 0;
    while truncation_bound(params, d, steps) > tolerance {
        d += 1;
        if d > 1_000_000 {
            break;
        }
    }
    d
}

/// Errors unless the window's rightmost site is certified after `steps` steps.
pub fn certify_window(
    params: &ModelParams,
    window: &OccupancyWindow,
    steps: usize,
    tolerance: f64,
) -> Result<i64, DynamicsError> {
    let distance = window.width().saturating_sub(1);
    let bound = truncation_bound(params, distance, steps);
    if bound > tolerance {
        return Err(DynamicsError::Truncation { bound, tolerance, distance, steps });
    }
    Ok(window.x_left + certified_distance(params, steps, tolerance) as i64)
}

/// A trajectory of the unfused model with its height field.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: ModelParams,
    pub window: OccupancyWindow,
    pub heights: HeightField,
    pub t: i64,
}

impl Trajectory {
    /// Starts at `t = 0` with `N(0, x)` centered so that `N(0, 0) = 0`
    /// whenever site 0 is at or right of the window's left edge.
    pub fn new(params: ModelParams, window: OccupancyWindow) -> Result<Self, DynamicsError> {
        window.validate(&params)?;
        let base = -(window.count_up_to(0) as i64);
        let heights = HeightField::from_window(0, &window, base);
        Ok(Self { params, window, heights, t: 0 })
    }

    /// Advances one unfused step; returns the flux of that step.
    pub fn advance(&mut self, env: &dyn UniformSource) -> Result<Vec<usize>, DynamicsError> {
        let (h, w) = step_recursion(&self.params, &self.heights, &self.window, self.t, env)?;
        let flux = h.flux_log.clone().unwrap_or_default();
        self.heights = h;
        self.window = w;
        self.t += 1;
        Ok(flux)
    }

    /// Advances one fused step (`J` unfused steps).
    pub fn advance_fused(&mut self, env: &dyn UniformSource) -> Result<(), DynamicsError> {
        for _ in 0..self.params.line_capacity {
            self.advance(env)?;
        }
        Ok(())
    }
}
