//! Single seeded trajectory for the `simulate` subcommand.

use serde::Serialize;

use super::config::{InitialShape, LeftBoundary, SimulationConfig};
use super::ExperimentError;
use crate::dynamics::{make_initial, BoundaryMode, InitialKind, Trajectory};
use crate::rng::RandomEnvironment;
use crate::stationary::{flux_probability, stationary};

/// One site of one time slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrajectoryRow {
    pub t: i64,
    pub x: i64,
    pub eta: usize,
    /// `N(t, x)`, centered so that `N(0, 0) = 0`.
    pub height: i64,
}

/// Runs `steps` unfused steps and returns every slice `t = 0..=steps`.
pub fn simulate(config: &SimulationConfig) -> Result<Vec<TrajectoryRow>, ExperimentError> {
    let params = config.params()?;
    let env = RandomEnvironment::new(config.seed);
    let kind = match config.initial {
        InitialShape::Product => InitialKind::Product { pmf: stationary(&params, config.density)?.pmf },
        InitialShape::Step => InitialKind::Step { pmf: stationary(&params, config.density)?.pmf },
        InitialShape::Flat => InitialKind::Flat { density: config.density },
    };
    let mode = match config.boundary {
        LeftBoundary::LeftFinite => BoundaryMode::LeftFinite,
        LeftBoundary::Open => BoundaryMode::Truncated { inflow: Vec::new() },
        LeftBoundary::Stationary => {
            let chi = stationary(&params, config.density)?.chi;
            let inflow = (0..params.line_capacity as i64).map(|t| flux_probability(&params, chi, t)).collect();
            BoundaryMode::Truncated { inflow }
        }
    };
    let window = make_initial(&kind, config.x_left, config.window, mode, &params, &env);
    let mut traj = Trajectory::new(params, window)?;
    let mut rows = Vec::with_capacity((config.steps + 1) * config.window);
    let mut push = |traj: &Trajectory| {
        let heights = traj.heights.values();
        for (k, (&eta, &height)) in traj.window.values.iter().zip(&heights).enumerate() {
            rows.push(TrajectoryRow { t: traj.t, x: traj.window.x_left + k as i64, eta, height });
        }
    };
    push(&traj);
    for _ in 0..config.steps {
        traj.advance(&env)?;
        push(&traj);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::ParamSource;

    fn config() -> SimulationConfig {
        SimulationConfig {
            max_occupancy: 2,
            line_capacity: 2,
            source: ParamSource::Direct { q: 2.0, alpha: -0.05 },
            density: 0.7,
            initial: InitialShape::Product,
            boundary: LeftBoundary::Stationary,
            x_left: -4,
            window: 10,
            steps: 8,
            seed: 5,
        }
    }

    #[test]
    fn heights_are_monotone_in_time() {
        let rows = simulate(&config()).unwrap();
        assert_eq!(rows.len(), 9 * 10);
        for t in 0..8 {
            for k in 0..10 {
                let d = rows[t * 10 + k].height - rows[(t + 1) * 10 + k].height;
                assert!(d == 0 || d == 1, "t={t} k={k} d={d}");
            }
        }
        let origin = rows.iter().find(|r| r.t == 0 && r.x == 0).unwrap();
        assert_eq!(origin.height, 0);
    }

    #[test]
    fn left_finite_conserves_particles() {
        let c = SimulationConfig {
            boundary: LeftBoundary::LeftFinite,
            initial: InitialShape::Step,
            window: 30,
            x_left: -2,
            ..config()
        };
        match simulate(&c) {
            Ok(rows) => {
                let total = |t: i64| rows.iter().filter(|r| r.t == t).map(|r| r.eta).sum::<usize>();
                assert_eq!(total(0), total(8));
            }
            Err(e) => assert!(matches!(e, ExperimentError::Dynamics(_))),
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        assert_eq!(simulate(&config()).unwrap(), simulate(&config()).unwrap());
        let other = SimulationConfig { seed: 6, ..config() };
        assert_ne!(simulate(&config()).unwrap(), simulate(&other).unwrap());
    }
}
