//! Exact one-step (and few-step) laws by expanding every vertex branch.

use super::{BoundaryMode, DynamicsError, OccupancyWindow};
use crate::params::ModelParams;
use crate::weights::{fused_table, unfused_table, VertexWeightTable};
use std::collections::BTreeMap;

pub const DEFAULT_STATE_LIMIT: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    /// Unfused step at unfused time `t` (parameter `alpha(t)`).
    Unfused { t: i64 },
    /// Fused step with `L^{(J)}_alpha`.
    Fused,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub values: Vec<usize>,
    /// Lines that entered at the left edge.
    pub inflow: usize,
    /// Lines that left at the right edge.
    pub exits: usize,
    pub prob: f64,
}

impl StepOutcome {
    /// Lines crossing `y -> y+1` for each window site, given the prior window.
    /// Only meaningful for a single step.
    pub fn flux(&self, before: &OccupancyWindow) -> Vec<usize> {
        let mut k = self.inflow as i64;
        before
            .values
            .iter()
            .zip(&self.values)
            .map(|(&a, &b)| {
                k += a as i64 - b as i64;
                k as usize
            })
            .collect()
    }

    pub fn window(&self, before: &OccupancyWindow) -> OccupancyWindow {
        OccupancyWindow { values: self.values.clone(), ..before.clone() }
    }
}

/// Exact law of the window after one or more steps.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLaw {
    pub outcomes: Vec<StepOutcome>,
    /// Probability of outcomes that were discarded (lines leaving a
    /// left-finite window when exits are not tracked).
    pub missing_mass: f64,
}

impl StepLaw {
    pub fn total(&self) -> f64 {
        self.outcomes.iter().map(|o| o.prob).sum()
    }

    /// `E[f(outcome)]`.
    pub fn expect(&self, f: impl Fn(&StepOutcome) -> f64) -> f64 {
        self.outcomes.iter().map(|o| o.prob * f(o)).sum()
    }

    /// Total-variation distance between two laws on window contents.
    pub fn total_variation(&self, other: &StepLaw) -> f64 {
        let mut diff: BTreeMap<(Vec<usize>, usize, usize), f64> = BTreeMap::new();
        for o in &self.outcomes {
            *diff.entry((o.values.clone(), o.inflow, o.exits)).or_default() += o.prob;
        }
        for o in &other.outcomes {
            *diff.entry((o.values.clone(), o.inflow, o.exits)).or_default() -= o.prob;
        }
        0.5 * diff.values().map(|d| d.abs()).sum::<f64>()
    }
}

fn expand(
    table: &VertexWeightTable,
    state: &[usize],
    site: usize,
    h: usize,
    prob: f64,
    buf: &mut Vec<usize>,
    emit: &mut dyn FnMut(&[usize], usize, f64),
) {
    if site == state.len() {
        emit(buf, h, prob);
        return;
    }
    for ((i2, j2), w) in table.outputs(state[site], h) {
        buf.push(i2);
        expand(table, state, site + 1, j2, prob * w, buf, emit);
        buf.pop();
    }
}

fn step_with_table(
    table: &VertexWeightTable,
    state: &OccupancyWindow,
    inflow_p: f64,
    limit: usize,
) -> Result<StepLaw, DynamicsError> {
    let mut outcomes = Vec::new();
    let mut overflow = false;
    let mut buf = Vec::with_capacity(state.width());
    let max_inflow = if inflow_p > 0.0 { 1 } else { 0 };
    for inflow in 0..=max_inflow {
        let p_in = if max_inflow == 0 {
            1.0
        } else if inflow == 1 {
            inflow_p
        } else {
            1.0 - inflow_p
        };
        let mut emit = |vals: &[usize], exits: usize, prob: f64| {
            if outcomes.len() >= limit {
                overflow = true;
                return;
            }
            outcomes.push(StepOutcome { values: vals.to_vec(), inflow, exits, prob });
        };
        expand(table, &state.values, 0, inflow, p_in, &mut buf, &mut emit);
    }
    if overflow {
        return Err(DynamicsError::StateSpaceTooLarge { outcomes: limit + 1, limit });
    }
    Ok(StepLaw { outcomes, missing_mass: 0.0 })
}

/// Exact law of one step. Lines leaving the right edge are kept as
/// `exits` (they never return), so the law is exact with zero missing mass.
pub fn enumerate_step(
    params: &ModelParams,
    state: &OccupancyWindow,
    mode: StepMode,
    limit: usize,
) -> Result<StepLaw, DynamicsError> {
    state.validate(params)?;
    let (table, phase) = match mode {
        StepMode::Unfused { t } => (unfused_table(params, t)?, params.phase(t)),
        StepMode::Fused => (fused_table(params)?, 0),
    };
    let inflow_p = match &state.mode {
        BoundaryMode::LeftFinite => 0.0,
        m => m.inflow_probability(phase),
    };
    step_with_table(&table, state, inflow_p, limit)
}

/// Exact law after `steps` unfused steps starting at time `t0`; outcomes with
/// identical contents, total inflow and total exits are merged.
pub fn enumerate_steps(
    params: &ModelParams,
    state: &OccupancyWindow,
    t0: i64,
    steps: usize,
    limit: usize,
) -> Result<StepLaw, DynamicsError> {
    let mut current: BTreeMap<(Vec<usize>, usize, usize), f64> = BTreeMap::new();
    current.insert((state.values.clone(), 0, 0), 1.0);
    for s in 0..steps {
        let t = t0 + s as i64;
        let table = unfused_table(params, t)?;
        let inflow_p = state.mode.inflow_probability(params.phase(t));
        let mut next: BTreeMap<(Vec<usize>, usize, usize), f64> = BTreeMap::new();
        for ((vals, inflow, exits), p) in current {
            let w = OccupancyWindow { values: vals, ..state.clone() };
            let law = step_with_table(&table, &w, inflow_p, limit)?;
            for o in law.outcomes {
                *next.entry((o.values, inflow + o.inflow, exits + o.exits)).or_default() += p * o.prob;
            }
            if next.len() > limit {
                return Err(DynamicsError::StateSpaceTooLarge { outcomes: next.len(), limit });
            }
        }
        current = next;
    }
    Ok(StepLaw {
        outcomes: current
            .into_iter()
            .map(|((values, inflow, exits), prob)| StepOutcome { values, inflow, exits, prob })
            .collect(),
        missing_mass: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::step_unfused;
    use crate::rng::RandomEnvironment;
    use crate::weights::{build_table, TableOptions};

    #[test]
    fn empty_window_single_outcome() {
        let p = ModelParams::stochastic(2.0, 2, 2, -0.05).unwrap();
        let w = OccupancyWindow::empty(0, 5);
        let law = enumerate_step(&p, &w, StepMode::Fused, DEFAULT_STATE_LIMIT).unwrap();
        assert_eq!(law.outcomes.len(), 1);
        assert!((law.outcomes[0].prob - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_site_matches_table_row() {
        let p = ModelParams::stochastic(1.7, 3, 2, -0.03).unwrap();
        let tab = build_table(&p, p.alpha, 2, TableOptions::default()).unwrap();
        for eta in 0..=3 {
            let w = OccupancyWindow::new(0, vec![eta], BoundaryMode::Truncated { inflow: vec![] });
            let law = enumerate_step(&p, &w, StepMode::Fused, DEFAULT_STATE_LIMIT).unwrap();
            for o in &law.outcomes {
                assert!((o.prob - tab.weight(eta, 0, o.values[0], o.exits)).abs() < 1e-15);
            }
            assert!((law.total() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fusion_on_small_window() {
        for j in [2usize, 3] {
            let p = ModelParams::stochastic(1.9, 2, j, -0.3 * 1.9f64.powi(-((j + 1) as i32))).unwrap();
            let w = OccupancyWindow::new(0, vec![2, 0, 1, 1, 0], BoundaryMode::Truncated { inflow: vec![] });
            let fused = enumerate_step(&p, &w, StepMode::Fused, DEFAULT_STATE_LIMIT).unwrap();
            let unfused = enumerate_steps(&p, &w, 0, j, DEFAULT_STATE_LIMIT).unwrap();
            assert!(fused.total_variation(&unfused) < 1e-9, "J={j}");
        }
    }

    #[test]
    fn empirical_law_matches_enumeration() {
        let p = ModelParams::stochastic(2.0, 2, 1, -0.2).unwrap();
        let w = OccupancyWindow::new(0, vec![2, 0, 1, 0], BoundaryMode::Truncated { inflow: vec![] });
        let law = enumerate_step(&p, &w, StepMode::Unfused { t: 0 }, DEFAULT_STATE_LIMIT).unwrap();
        let env = RandomEnvironment::new(77);
        let n = 400_000u64;
        let mut counts: BTreeMap<(Vec<usize>, usize), u64> = BTreeMap::new();
        for r in 0..n {
            let s = step_unfused(&p, &w, 0, &env.replica(r)).unwrap();
            *counts.entry((s.window.values.clone(), s.outflow())).or_default() += 1;
        }
        let mut chi2 = 0.0;
        let mut cells = 0;
        for o in &law.outcomes {
            let e = o.prob * n as f64;
            if e < 5.0 {
                continue;
            }
            let c = *counts.get(&(o.values.clone(), o.exits)).unwrap_or(&0) as f64;
            chi2 += (c - e).powi(2) / e;
            cells += 1;
        }
        // generous bound: mean cells-1, sd sqrt(2 cells)
        assert!(chi2 < cells as f64 + 6.0 * (2.0 * cells as f64).sqrt(), "chi2={chi2} cells={cells}");
    }
}
