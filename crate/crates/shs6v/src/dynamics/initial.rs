//! Initial data: product stationary, half-line product, flat and custom.

use super::{BoundaryMode, OccupancyWindow};
use crate::params::ModelParams;
use crate::rng::{DrawKind, UniformSource};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum InitialKind {
    /// Independent sites with the given pmf on `{0..I}`.
    Product {
        pmf: Vec<f64>,
    },
    /// Product law on sites `x >= 0`, empty to the left.
    Step {
        pmf: Vec<f64>,
    },
    /// Deterministic `eta_x = floor((x+1) rho) - floor(x rho)`.
    Flat {
        density: f64,
    },
    Custom {
        values: Vec<usize>,
    },
}

fn draw(pmf: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    pmf.len() - 1
}

/// Builds initial data on `x_left .. x_left + width`; random kinds use the
/// `Initial` stream of `env` at `t = 0`.
pub fn make_initial(
    kind: &InitialKind,
    x_left: i64,
    width: usize,
    mode: BoundaryMode,
    params: &ModelParams,
    env: &dyn UniformSource,
) -> OccupancyWindow {
    let values = match kind {
        InitialKind::Product { pmf } => {
            env.row(DrawKind::Initial, 0, x_left, width).iter().map(|&u| draw(pmf, u)).collect()
        }
        InitialKind::Step { pmf } => (0..width as i64)
            .map(|k| {
                let x = x_left + k;
                if x >= 0 {
                    draw(pmf, env.uniform(DrawKind::Initial, 0, x))
                } else {
                    0
                }
            })
            .collect(),
        InitialKind::Flat { density } => (0..width as i64)
            .map(|k| {
                let x = (x_left + k) as f64;
                (((x + 1.0) * density).floor() - (x * density).floor()) as usize
            })
            .map(|v| v.min(params.max_occupancy))
            .collect(),
        InitialKind::Custom { values } => values.iter().take(width).copied().collect(),
    };
    OccupancyWindow::new(x_left, values, mode)
}
