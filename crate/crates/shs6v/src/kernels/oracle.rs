//! Independent check paths for the contour kernels: the dense law of the
//! mirrored sequential chain and convolutions of per-step jump laws.

use rayon::prelude::*;
use serde::Serialize;

use super::quadrature::QuadratureOptions;
use super::tilt::{jump_pmf, TiltFrame};
use super::two_particle::{one_particle_kernel, KernelQuery, TwoParticleKernel};
use super::KernelError;
use crate::duality::{reversed_law, LocationVector, DEFAULT_PRUNE};
use crate::params::ModelParams;

/// Untilted one-particle law over `[s, t)` as a convolution of step laws,
/// truncated to `len` entries.
pub fn convolution_law(params: &ModelParams, t: i64, s: i64, len: usize) -> Vec<f64> {
    let mut law = vec![0.0; len];
    if len > 0 {
        law[0] = 1.0;
    }
    for k in s..t {
        let step: Vec<f64> = (0..len).map(|n| jump_pmf(params, k, n)).collect();
        let mut next = vec![0.0; len];
        for (i, a) in law.iter().enumerate() {
            for (j, b) in step.iter().enumerate().take(len - i) {
                next[i + j] += a * b;
            }
        }
        law = next;
    }
    law
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepReport {
    pub queries: usize,
    pub max_gap: f64,
    pub max_nodes: usize,
    /// Probability pruned from the enumerated laws.
    pub pruned_mass: f64,
}

impl SweepReport {
    fn merge(self, other: Self) -> Self {
        Self {
            queries: self.queries + other.queries,
            max_gap: self.max_gap.max(other.max_gap),
            max_nodes: self.max_nodes.max(other.max_nodes),
            pruned_mass: self.pruned_mass.max(other.pruned_mass),
        }
    }

    fn empty() -> Self {
        Self { queries: 0, max_gap: 0.0, max_nodes: 0, pruned_mass: 0.0 }
    }
}

/// Compares the two-particle contour kernel with the enumerated chain for
/// every ordered `x` and `y` with coordinates in `[lo, hi]`, every
/// `1 <= t - s <= max_steps` and every start phase `s` in `0..J`.
pub fn sweep_two_particle(
    params: &ModelParams,
    lo: i64,
    hi: i64,
    max_steps: i64,
    opts: QuadratureOptions,
) -> Result<SweepReport, KernelError> {
    let kernel = TwoParticleKernel::reversed(params, opts)?.with_span((hi - lo) as usize);
    let mut starts = Vec::new();
    for s in 0..params.line_capacity as i64 {
        for steps in 1..=max_steps {
            // Warm the table cache serially so parallel workers share it.
            kernel.table(s + steps, s, (hi - lo) as usize)?;
            for x1 in lo..=hi {
                for x2 in x1..=hi {
                    starts.push((s, steps, [x1, x2]));
                }
            }
        }
    }
    starts
        .par_iter()
        .map(|&(s, steps, x)| {
            let start = LocationVector::new(x.to_vec(), params.max_occupancy)
                .map_err(|e| KernelError::InvalidQuery(e.to_string()))?;
            let law = reversed_law(params, &start, s, steps as usize, DEFAULT_PRUNE);
            let mut rep = SweepReport { pruned_mass: law.lost_mass, ..SweepReport::empty() };
            for y1 in lo..=hi {
                for y2 in y1..=hi {
                    let v = kernel.evaluate(&KernelQuery::lattice(x, [y1, y2], s + steps, s)?)?;
                    rep.queries += 1;
                    rep.max_nodes = rep.max_nodes.max(v.nodes);
                    rep.max_gap = rep.max_gap.max((v.value - law.prob(&[y1, y2])).abs());
                }
            }
            Ok(rep)
        })
        .try_reduce(SweepReport::empty, |a, b| Ok(a.merge(b)))
}

/// Max gap between the one-particle contour kernel and the convolution
/// oracle for jumps `0..len` and `1 <= t - s <= max_steps`.
pub fn sweep_one_particle(
    params: &ModelParams,
    len: usize,
    max_steps: i64,
    opts: QuadratureOptions,
) -> Result<SweepReport, KernelError> {
    let mut rep = SweepReport::empty();
    for s in 0..params.line_capacity as i64 {
        for steps in 1..=max_steps {
            let law = convolution_law(params, s + steps, s, len + 40);
            for (m, want) in law.iter().take(len).enumerate() {
                let v = one_particle_kernel(params, None, s + steps, s, m as f64, opts)?;
                rep.queries += 1;
                rep.max_nodes = rep.max_nodes.max(v.nodes);
                rep.max_gap = rep.max_gap.max((v.value - want).abs());
            }
        }
    }
    Ok(rep)
}

/// Sum of the tilted one-particle kernel over its support window, which is
/// one by the normalization of every tilted step.
pub fn tilted_one_particle_mass(
    params: &ModelParams,
    frame: &TiltFrame,
    t: i64,
    s: i64,
    len: usize,
    opts: QuadratureOptions,
) -> Result<f64, KernelError> {
    let drift = frame.mu_diff(t, s);
    (0..len).map(|m| one_particle_kernel(params, Some(frame), t, s, m as f64 - drift, opts).map(|v| v.value)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convolution_law_sums_to_one() {
        let p = ModelParams::stochastic(2.0, 3, 2, -0.04).unwrap();
        let law = convolution_law(&p, 5, 0, 60);
        assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn small_sweep_agrees() {
        let p = ModelParams::stochastic(2.0, 3, 2, -0.04).unwrap();
        let rep = sweep_two_particle(&p, -2, 2, 2, QuadratureOptions::default()).unwrap();
        assert!(rep.max_gap < 1e-8, "{rep:?}");
        assert_eq!(rep.queries, 2 * 2 * 15 * 15);
    }

    #[test]
    fn tilted_mass_is_one() {
        let p = ModelParams::stochastic(2.0, 3, 2, -0.04).unwrap();
        let frame = TiltFrame::new(&p, 1.2).unwrap();
        let mass = tilted_one_particle_mass(&p, &frame, 5, 1, 20, QuadratureOptions::default()).unwrap();
        assert!((mass - 1.0).abs() < 1e-9);
    }

    #[test]
    fn long_jumps_converge() {
        // jumps up to 60 sites with a strongly contracting propagator
        let p = ModelParams::stochastic(4.0, 2, 1, -0.05).unwrap();
        let frame = TiltFrame::new(&p, 0.7).unwrap();
        for steps in 1..=4 {
            let mass = tilted_one_particle_mass(&p, &frame, steps, 0, 60, QuadratureOptions::default()).unwrap();
            assert!((mass - 1.0).abs() < 1e-12, "{steps}: {mass}");
        }
    }
}
