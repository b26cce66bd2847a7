//! Markov duality between the forward model and the reversed location
//! process: the functionals `H`, `G` / `D~` and their tilted versions, the
//! reversed process itself (as the mirror image of the forward sequential
//! update), its exact few-step law, and two-sided verification of the
//! duality identities.

use crate::dynamics::{
    enumerate_steps, step_unfused, BoundaryMode, DynamicsError, HeightField, OccupancyWindow, DEFAULT_STATE_LIMIT,
};
use crate::hopfcole::ZField;
use crate::kernels::tilt::TiltFrame;
use crate::kernels::KernelError;
use crate::params::ModelParams;
use crate::qspecial::q_bracket;
use crate::rng::{DrawKind, RandomEnvironment, UniformSource};
use crate::weights::bernoulli_means;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

/// Default per-branch probability below which reversed-chain branches are dropped.
pub const DEFAULT_PRUNE: f64 = 1e-17;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualityError {
    #[error("invalid location vector: {0}")]
    InvalidLocation(String),
    #[error("{mode:?} duality takes {expected} location(s), got {got}")]
    WrongArity { mode: DualityMode, expected: usize, got: usize },
    #[error("tilted dualities need a density rho")]
    MissingDensity,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Ordered particle locations `y_1 <= ... <= y_k` with cluster sizes at most `I`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct LocationVector {
    positions: Vec<i64>,
}

impl LocationVector {
    pub fn new(positions: Vec<i64>, max_occupancy: usize) -> Result<Self, DualityError> {
        if positions.windows(2).any(|w| w[0] > w[1]) {
            return Err(DualityError::InvalidLocation(format!("{positions:?} is not non-decreasing")));
        }
        let mut run = 0;
        for (i, &y) in positions.iter().enumerate() {
            run = if i > 0 && positions[i - 1] == y { run + 1 } else { 1 };
            if run > max_occupancy {
                return Err(DualityError::InvalidLocation(format!(
                    "cluster at {y} exceeds max_occupancy {max_occupancy}"
                )));
            }
        }
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[i64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// `[n]` in base `q^{1/2}`.
fn half_bracket(n: i64, q: f64) -> f64 {
    q_bracket(n, q.sqrt())
}

/// `H = prod_i q^{-N(y_i)}`.
pub fn functional_h(q: f64, heights: &HeightField, y: &[i64]) -> f64 {
    let n: i64 = y.iter().map(|&yi| heights.at(yi)).sum();
    q.powf(-(n as f64))
}

/// Bracket part of the two-point functional, shared by `G`, `D~` and the tilted `D`.
fn pair_factor(q: f64, max_occupancy: usize, eta1: usize, eta2: usize, same_site: bool) -> f64 {
    let i = max_occupancy as i64;
    let (e1, e2) = (eta1 as i64, eta2 as i64);
    if same_site {
        half_bracket(i - e1, q) * half_bracket(i - 1 - e1, q) * q.powi(e1 as i32)
    } else {
        half_bracket(i - 1, q) / half_bracket(i, q)
            * half_bracket(i - e1, q)
            * half_bracket(i - e2, q)
            * q.powf(0.5 * (e1 + e2) as f64)
    }
}

/// `D~(t, y1, y2)` evaluated on a height field (the functional `G` when the
/// field comes from a left-finite configuration).
pub fn functional_dtilde(params: &ModelParams, heights: &HeightField, y1: i64, y2: i64) -> f64 {
    let q = params.q;
    let n = heights.at(y1) + heights.at(y2);
    q.powf(-(n as f64)) * pair_factor(q, params.max_occupancy, heights.eta(y1), heights.eta(y2), y1 == y2)
}

/// `G(eta, (y1, y2))` for a left-finite window (heights counted from the empty left).
pub fn functional_g(params: &ModelParams, window: &OccupancyWindow, y1: i64, y2: i64) -> f64 {
    functional_dtilde(params, &HeightField::from_window(0, window, 0), y1, y2)
}

/// Tilted `D(t, x1, x2)`; the arguments are lattice sites `x + mu_hat(t)`.
pub fn functional_d_tilted(params: &ModelParams, z: &ZField, site1: i64, site2: i64) -> f64 {
    let log = z.log_at(site1) + z.log_at(site2);
    log.exp() * pair_factor(params.q, params.max_occupancy, z.eta(site1), z.eta(site2), site1 == site2)
}

fn mirrored_occupancy(y: &[i64]) -> BTreeMap<i64, usize> {
    let mut occ = BTreeMap::new();
    for &yi in y {
        *occ.entry(-yi).or_insert(0) += 1;
    }
    occ
}

fn unmirror(occ: &BTreeMap<i64, usize>) -> Vec<i64> {
    let mut out: Vec<i64> = occ.iter().flat_map(|(&p, &n)| std::iter::repeat_n(-p, n)).collect();
    out.sort_unstable();
    out
}

/// One step of the reversed location process at time `t`: the forward
/// sequential update applied to the mirrored configuration.
pub fn reversed_step(params: &ModelParams, y: &LocationVector, t: i64, env: &dyn UniformSource) -> LocationVector {
    let mut occ = mirrored_occupancy(&y.positions);
    let Some((&start, _)) = occ.iter().next() else {
        return y.clone();
    };
    let last = *occ.keys().next_back().unwrap_or(&start);
    let alpha_t = params.alpha_at(t);
    let mut h = 0;
    let mut x = start;
    while x <= last || h > 0 {
        let eta = occ.get(&x).copied().unwrap_or(0);
        if eta == 0 && h == 0 {
            x += 1;
            continue;
        }
        let (p_b, p_bp) = bernoulli_means(params, alpha_t, eta);
        let u = env.uniform(DrawKind::Reversed, t, x);
        let out = if h == 0 { usize::from(u < p_b) } else { usize::from(u < p_bp) };
        let new = eta + h - out;
        if new == 0 {
            occ.remove(&x);
        } else {
            occ.insert(x, new);
        }
        h = out;
        x += 1;
    }
    LocationVector { positions: unmirror(&occ) }
}

/// Exact law of the reversed process after a few steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReversedLaw {
    pub outcomes: BTreeMap<Vec<i64>, f64>,
    /// Probability of branches dropped below the prune threshold.
    pub lost_mass: f64,
}

impl ReversedLaw {
    pub fn prob(&self, y: &[i64]) -> f64 {
        self.outcomes.get(y).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.outcomes.values().sum()
    }
}

struct Expansion<'a> {
    params: &'a ModelParams,
    alpha_t: f64,
    prune: f64,
    lost: f64,
    out: BTreeMap<Vec<i64>, f64>,
}

impl Expansion<'_> {
    fn run(&mut self, occ: &mut BTreeMap<i64, usize>, x: i64, h: usize, prob: f64) {
        let next_particle = occ.range(x..).next().map(|(&p, _)| p);
        if h == 0 {
            match next_particle {
                None => {
                    *self.out.entry(unmirror(occ)).or_insert(0.0) += prob;
                    return;
                }
                Some(p) if p > x => return self.run(occ, p, 0, prob),
                _ => {}
            }
        }
        if prob < self.prune {
            self.lost += prob;
            return;
        }
        let eta = occ.get(&x).copied().unwrap_or(0);
        let (p_b, p_bp) = bernoulli_means(self.params, self.alpha_t, eta);
        let p_out = if h == 0 { p_b } else { p_bp };
        for (out, w) in [(0usize, 1.0 - p_out), (1, p_out)] {
            if w <= 0.0 {
                continue;
            }
            let new = eta + h - out;
            set_site(occ, x, new);
            self.run(occ, x + 1, out, prob * w);
            set_site(occ, x, eta);
        }
    }
}

fn set_site(occ: &mut BTreeMap<i64, usize>, x: i64, n: usize) {
    if n == 0 {
        occ.remove(&x);
    } else {
        occ.insert(x, n);
    }
}

/// Law of the reversed process started at `y` after the steps at times
/// `t0, ..., t0 + steps - 1`.
pub fn reversed_law(params: &ModelParams, y: &LocationVector, t0: i64, steps: usize, prune: f64) -> ReversedLaw {
    let mut current: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    current.insert(y.positions.clone(), 1.0);
    let mut lost = 0.0;
    for s in 0..steps {
        let mut exp =
            Expansion { params, alpha_t: params.alpha_at(t0 + s as i64), prune, lost: 0.0, out: BTreeMap::new() };
        for (pos, p) in &current {
            let mut occ = mirrored_occupancy(pos);
            let start = occ.keys().next().copied().unwrap_or(0);
            exp.run(&mut occ, start, 0, *p);
        }
        lost += exp.lost;
        current = exp.out;
    }
    ReversedLaw { outcomes: current, lost_mass: lost }
}

/// Tilt factor turning the reversed transition probability between lattice
/// sites into the tilted kernel `V`:
/// `(lambda_hat(t)/lambda_hat(s))^2 q^{rho (sum x' - sum y')}`.
pub fn tilt_factor(frame: &TiltFrame, q: f64, t: i64, s: i64, x: &[i64], y: &[i64]) -> f64 {
    let k = x.len() as i32;
    let shift: i64 = x.iter().sum::<i64>() - y.iter().sum::<i64>();
    frame.lambda_ratio(t, s).powi(k) * q.powf(frame.rho * shift as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DualityMode {
    /// `prod q^{-N(y_i)}`, any number of locations.
    H,
    /// `G` / `D~`, two locations.
    G,
    /// `Z(t, x1) Z(t, x2)` with the tilted kernel `V`.
    TiltedZ,
    /// Tilted `D` with the tilted kernel `V`.
    TiltedD,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DualityMethod {
    Exact,
    MonteCarlo { replicas: u64, seed: u64 },
}

/// A duality identity instance. Locations are integer lattice sites; in the
/// tilted modes they are `x + mu_hat(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualityQuery {
    pub mode: DualityMode,
    pub locations: LocationVector,
    pub t0: i64,
    pub steps: usize,
    pub rho: Option<f64>,
    pub prune: f64,
}

impl DualityQuery {
    pub fn new(mode: DualityMode, locations: LocationVector, t0: i64, steps: usize) -> Self {
        Self { mode, locations, t0, steps, rho: None, prune: DEFAULT_PRUNE }
    }

    pub fn with_density(mut self, rho: f64) -> Self {
        self.rho = Some(rho);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityReport {
    pub mode: DualityMode,
    pub method: DualityMethod,
    /// Forward side `E[F(t, y) | F(s)]`.
    pub lhs: f64,
    /// Reversed side `sum_x P(y, x) F(s, x)`.
    pub rhs: f64,
    pub gap: f64,
    /// Reversed-chain mass dropped by pruning (bounds the missing part of `rhs`
    /// times the largest functional value).
    pub tail_mass: f64,
    /// Largest functional value met on the reversed side.
    pub functional_bound: f64,
    pub std_error: Option<f64>,
}

impl DualityReport {
    /// Exact: `gap <= tol + tail`; Monte Carlo: `gap <= sigmas * std_error + tail`.
    pub fn passes(&self, tol: f64, sigmas: f64) -> bool {
        let tail = self.tail_mass * self.functional_bound.max(1.0);
        match self.std_error {
            Some(se) => self.gap <= sigmas * se + tol + tail,
            None => self.gap <= tol + tail,
        }
    }
}

struct Evaluator<'a> {
    params: &'a ModelParams,
    mode: DualityMode,
    frame: Option<TiltFrame>,
}

impl Evaluator<'_> {
    fn eval(&self, heights: &HeightField, y: &[i64]) -> f64 {
        let q = self.params.q;
        match self.mode {
            DualityMode::H => functional_h(q, heights, y),
            DualityMode::G => functional_dtilde(self.params, heights, y[0], y[1]),
            DualityMode::TiltedZ | DualityMode::TiltedD => {
                let frame = self.frame.as_ref().expect("tilted modes carry a frame");
                let z = ZField::from_heights(q, heights.clone(), frame);
                if self.mode == DualityMode::TiltedZ {
                    (z.log_at(y[0]) + z.log_at(y[1])).exp()
                } else {
                    functional_d_tilted(self.params, &z, y[0], y[1])
                }
            }
        }
    }
}

/// Evaluates both sides of a duality identity on a left-finite window.
pub fn verify_duality(
    params: &ModelParams,
    window: &OccupancyWindow,
    query: &DualityQuery,
    method: DualityMethod,
) -> Result<DualityReport, DualityError> {
    window.validate(params)?;
    if window.mode != BoundaryMode::LeftFinite {
        return Err(DualityError::InvalidLocation("duality checks need a left-finite window".into()));
    }
    let y = query.locations.positions();
    let expected = match query.mode {
        DualityMode::H => y.len().max(1),
        _ => 2,
    };
    if y.len() != expected {
        return Err(DualityError::WrongArity { mode: query.mode, expected, got: y.len() });
    }
    if let Some(&last) = y.last() {
        if last > window.x_right() {
            return Err(DualityError::InvalidLocation(format!(
                "location {last} lies right of the window edge {}",
                window.x_right()
            )));
        }
    }
    let frame = match query.mode {
        DualityMode::TiltedZ | DualityMode::TiltedD => {
            Some(TiltFrame::new(params, query.rho.ok_or(DualityError::MissingDensity)?)?)
        }
        _ => None,
    };
    let ev = Evaluator { params, mode: query.mode, frame };
    let s = query.t0;
    let t = s + query.steps as i64;

    // reversed side
    let start = HeightField::from_window(s, window, 0);
    let law = reversed_law(params, &query.locations, s, query.steps, query.prune);
    let mut rhs = 0.0;
    let mut bound: f64 = 0.0;
    for (x, p) in &law.outcomes {
        let mut f = ev.eval(&start, x);
        if let Some(frame) = &ev.frame {
            // V = tilt factor * P and F(s) already carries lambda_hat(s)^2
            f *= tilt_factor(frame, params.q, t, s, y, x);
        }
        bound = bound.max(f.abs());
        rhs += p * f;
    }

    let (lhs, std_error) = match method {
        DualityMethod::Exact => {
            let fwd = enumerate_steps(params, window, s, query.steps, DEFAULT_STATE_LIMIT)?;
            let lhs = fwd.expect(|o| {
                let h = HeightField {
                    t,
                    x_left: window.x_left,
                    base: -(o.inflow as i64),
                    increments: o.values.clone(),
                    flux_log: None,
                };
                ev.eval(&h, y)
            });
            (lhs, None)
        }
        DualityMethod::MonteCarlo { replicas, seed } => {
            let (mean, se) = monte_carlo(params, window, s, query.steps, replicas, seed, |h| ev.eval(h, y))?;
            (mean, Some(se))
        }
    };
    Ok(DualityReport {
        mode: query.mode,
        method,
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
        tail_mass: law.lost_mass,
        functional_bound: bound,
        std_error,
    })
}

/// Mean and standard error of `f(heights at s + steps)` over independent replicas.
pub fn monte_carlo<F>(
    params: &ModelParams,
    window: &OccupancyWindow,
    s: i64,
    steps: usize,
    replicas: u64,
    seed: u64,
    f: F,
) -> Result<(f64, f64), DualityError>
where
    F: Fn(&HeightField) -> f64 + Sync,
{
    // exits are allowed; nothing ever enters
    let open = OccupancyWindow { mode: BoundaryMode::Truncated { inflow: vec![] }, ..window.clone() };
    let root = RandomEnvironment::new(seed);
    let (sum, sum_sq) = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<(f64, f64), DualityError> {
            let env = root.replica(r);
            let mut w = open.clone();
            for k in 0..steps as i64 {
                w = step_unfused(params, &w, s + k, &env)?.window;
            }
            let v = f(&HeightField::from_window(s + steps as i64, &w, 0));
            Ok((v, v * v))
        })
        .try_reduce(|| (0.0, 0.0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    let n = replicas as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::tilt::jump_pmf;
    use proptest::prelude::*;

    fn params() -> ModelParams {
        ModelParams::stochastic(2.0, 2, 2, -0.05).unwrap()
    }

    fn loc(p: &ModelParams, y: &[i64]) -> LocationVector {
        LocationVector::new(y.to_vec(), p.max_occupancy).unwrap()
    }

    #[test]
    fn location_vector_invariants() {
        assert!(LocationVector::new(vec![2, 1], 2).is_err());
        assert!(LocationVector::new(vec![1, 1, 1], 2).is_err());
        assert!(LocationVector::new(vec![1, 1, 3], 2).is_ok());
    }

    #[test]
    fn h_examples() {
        let empty = HeightField::from_window(0, &OccupancyWindow::empty(-3, 6), 0);
        assert_eq!(functional_h(2.0, &empty, &[0, 1]), 1.0);
        let one = HeightField::from_window(0, &OccupancyWindow::left_finite(-2, vec![0, 0, 1, 0]), 0);
        assert!((functional_h(2.0, &one, &[0]) - 0.5).abs() < 1e-15);
        let prod = functional_h(2.0, &one, &[-1]) * functional_h(2.0, &one, &[1]);
        assert!((functional_h(2.0, &one, &[-1, 1]) - prod).abs() < 1e-15);
    }

    #[test]
    fn g_examples() {
        let p = params();
        let r2 = 2f64.sqrt();
        let b1 = 1.0;
        let b2 = (2.0 - 0.5) / (r2 - 1.0 / r2);
        let empty = OccupancyWindow::empty(0, 4);
        assert!((functional_g(&p, &empty, 0, 2) - b1 * b2).abs() < 1e-14);
        // [I - 1 - eta] = [0] when eta = I - 1
        let w = OccupancyWindow::left_finite(0, vec![0, 1, 0]);
        assert_eq!(functional_g(&p, &w, 1, 1), 0.0);
    }

    #[test]
    fn spin_half_same_site_branch_vanishes() {
        let p = ModelParams::stochastic(2.0, 1, 1, -0.2).unwrap();
        for eta in 0..=1 {
            let w = OccupancyWindow::left_finite(0, vec![1, eta, 0]);
            assert_eq!(functional_g(&p, &w, 1, 1), 0.0);
        }
    }

    #[test]
    fn reversed_single_particle_law() {
        let p = params();
        for t in 0..2 {
            let law = reversed_law(&p, &loc(&p, &[3]), t, 1, 1e-20);
            for n in 0..10usize {
                let got = law.prob(&[3 - n as i64]);
                assert!((got - jump_pmf(&p, t, n)).abs() < 1e-15, "t={t} n={n}");
            }
            assert!((law.total() + law.lost_mass - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn reversed_step_matches_law() {
        let p = params();
        let y = loc(&p, &[0]);
        let env = RandomEnvironment::new(5);
        let n = 1_000_000u64;
        let counts: Vec<u64> = (0..n)
            .into_par_iter()
            .map(|r| {
                let m = -reversed_step(&p, &y, 0, &env.replica(r)).positions()[0];
                let mut c = vec![0u64; 4];
                c[(m as usize).min(3)] += 1;
                c
            })
            .reduce(|| vec![0; 4], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
        for (m, &c) in counts.iter().enumerate().take(3) {
            let pm = jump_pmf(&p, 0, m);
            let sd = (pm * (1.0 - pm) / n as f64).sqrt();
            assert!((c as f64 / n as f64 - pm).abs() < 4.0 * sd, "m={m}");
        }
    }

    #[test]
    fn zero_steps_is_identity() {
        let p = params();
        let y = loc(&p, &[1, 4]);
        let law = reversed_law(&p, &y, 0, 0, DEFAULT_PRUNE);
        assert_eq!(law.prob(&[1, 4]), 1.0);
        let w = OccupancyWindow::left_finite(0, vec![1, 2, 0, 1, 0]);
        for mode in [DualityMode::H, DualityMode::G] {
            let r = verify_duality(&p, &w, &DualityQuery::new(mode, y.clone(), 0, 0), DualityMethod::Exact).unwrap();
            assert!(r.gap < 1e-15);
        }
    }

    #[test]
    fn far_apart_particles_move_independently() {
        let p = params();
        let joint = reversed_law(&p, &loc(&p, &[0, 60]), 0, 1, 1e-22);
        let a = reversed_law(&p, &loc(&p, &[0]), 0, 1, 1e-22);
        let b = reversed_law(&p, &loc(&p, &[60]), 0, 1, 1e-22);
        let mut tv = 0.0;
        for (xa, pa) in &a.outcomes {
            for (xb, pb) in &b.outcomes {
                tv += (joint.prob(&[xa[0], xb[0]]) - pa * pb).abs();
            }
        }
        assert!(0.5 * tv < 1e-9, "tv={tv}");
    }

    #[test]
    fn exact_dualities_on_small_window() {
        let p = params();
        let w = OccupancyWindow::left_finite(0, vec![2, 0, 1, 1, 0]);
        let cases: Vec<(DualityMode, Vec<i64>)> = vec![
            (DualityMode::H, vec![2]),
            (DualityMode::H, vec![1, 3]),
            (DualityMode::H, vec![0, 2, 2]),
            (DualityMode::G, vec![1, 3]),
            (DualityMode::G, vec![2, 2]),
            (DualityMode::TiltedZ, vec![1, 4]),
            (DualityMode::TiltedD, vec![3, 3]),
            (DualityMode::TiltedD, vec![0, 4]),
        ];
        for (mode, y) in cases {
            for steps in 1..=2 {
                for t0 in 0..2 {
                    let q = DualityQuery::new(mode, loc(&p, &y), t0, steps).with_density(0.7);
                    let r = verify_duality(&p, &w, &q, DualityMethod::Exact).unwrap();
                    assert!(r.passes(1e-9, 0.0), "{mode:?} {y:?} steps={steps} t0={t0}: {r:?}");
                    assert!(r.gap < 1e-12, "{r:?}");
                }
            }
        }
    }

    #[test]
    fn monte_carlo_duality() {
        let p = params();
        let w = OccupancyWindow::left_finite(0, vec![1, 2, 0, 1, 0]);
        let q = DualityQuery::new(DualityMode::G, loc(&p, &[1, 3]), 0, 2);
        let r = verify_duality(&p, &w, &q, DualityMethod::MonteCarlo { replicas: 200_000, seed: 11 }).unwrap();
        assert!(r.passes(0.0, 4.0), "{r:?}");
    }

    #[test]
    fn arity_and_window_checks() {
        let p = params();
        let w = OccupancyWindow::left_finite(0, vec![0; 5]);
        let q = DualityQuery::new(DualityMode::G, loc(&p, &[1]), 0, 1);
        assert!(matches!(verify_duality(&p, &w, &q, DualityMethod::Exact), Err(DualityError::WrongArity { .. })));
        let q = DualityQuery::new(DualityMode::H, loc(&p, &[9]), 0, 1);
        assert!(verify_duality(&p, &w, &q, DualityMethod::Exact).is_err());
        let q = DualityQuery::new(DualityMode::TiltedZ, loc(&p, &[1, 2]), 0, 1);
        assert_eq!(verify_duality(&p, &w, &q, DualityMethod::Exact), Err(DualityError::MissingDensity));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn h_duality_random_windows(
            vals in proptest::collection::vec(0usize..=2, 5),
            y1 in 0i64..5, dy in 0i64..3, steps in 1usize..=2, t0 in 0i64..2,
        ) {
            let p = params();
            let w = OccupancyWindow::left_finite(0, vals);
            let y2 = (y1 + dy).min(4);
            let q = DualityQuery::new(DualityMode::H, loc(&p, &[y1, y2]), t0, steps);
            let r = verify_duality(&p, &w, &q, DualityMethod::Exact).unwrap();
            prop_assert!(r.passes(1e-9, 0.0), "{:?}", r);
        }

        #[test]
        fn reversed_step_preserves_order(y in proptest::collection::vec(-5i64..5, 1..4), seed in 0u64..1000) {
            let p = params();
            let mut y = y;
            y.sort_unstable();
            prop_assume!(LocationVector::new(y.clone(), 2).is_ok());
            let v = reversed_step(&p, &loc(&p, &y), 0, &RandomEnvironment::new(seed));
            prop_assert_eq!(v.len(), y.len());
            prop_assert!(LocationVector::new(v.positions().to_vec(), 2).is_ok());
            prop_assert!(v.positions().iter().zip(&y).all(|(a, b)| a <= b));
        }
    }
}
