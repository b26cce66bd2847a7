//! One- and two-particle transition kernels of the reversed process as
//! contour integrals over a large circle, and their tilted versions.
//!
//! Every integrand is analytic outside the circle, so each integral is a
//! Laurent coefficient at infinity. The trapezoid sums cancel terms of size
//! `R^{a+b}`, hence they are accumulated in double-double arithmetic.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_complex::Complex;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;

use super::quadrature::{refine_by_doubling, QuadratureOptions};
use super::symbols::IntervalSymbols;
use super::tilt::TiltFrame;
use super::KernelError;
use crate::params::ModelParams;
use crate::precision::{circle_node, DoubleDouble, Real};

type Cdd = Complex<DoubleDouble>;

/// Distance to a pole below which a node is rejected.
pub const POLE_GUARD: f64 = 1e-8;
/// Radius multiplier of the single retry after a pole collision.
const NUDGE: f64 = 1.1;
/// Tolerance of the exponent integrality assertion.
const INTEGRALITY_TOL: f64 = 1e-9;

/// Transition request from `(x1, x2)` at time `t` to `(y1, y2)` at time `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelQuery {
    pub x1: f64,
    pub x2: f64,
    pub y1: f64,
    pub y2: f64,
    pub t: i64,
    pub s: i64,
    /// Coordinates live on the drifting lattices of the tilted kernel.
    pub tilted: bool,
}

impl KernelQuery {
    pub fn new(x: [f64; 2], y: [f64; 2], t: i64, s: i64, tilted: bool) -> Result<Self, KernelError> {
        if x[0] > x[1] || y[0] > y[1] {
            return Err(KernelError::InvalidQuery(format!("unordered positions {x:?} -> {y:?}")));
        }
        if t < s {
            return Err(KernelError::InvalidQuery(format!("t={t} precedes s={s}")));
        }
        Ok(Self { x1: x[0], x2: x[1], y1: y[0], y2: y[1], t, s, tilted })
    }

    /// Untilted query on integer sites.
    pub fn lattice(x: [i64; 2], y: [i64; 2], t: i64, s: i64) -> Result<Self, KernelError> {
        Self::new([x[0] as f64, x[1] as f64], [y[0] as f64, y[1] as f64], t, s, false)
    }
}

/// A kernel value with the contour that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelValue {
    pub value: f64,
    pub nodes: usize,
    pub radius: f64,
}

/// Asserts that a contour exponent is an integer.
pub fn integral_exponent(v: f64) -> Result<i64, KernelError> {
    let r = v.round();
    if (v - r).abs() > INTEGRALITY_TOL {
        return Err(KernelError::NonIntegralExponent(v));
    }
    Ok(r as i64)
}

/// Weight `c(y1, y2)` of coinciding final positions.
pub fn coincidence_weight(params: &ModelParams, same_site: bool) -> f64 {
    if same_site {
        let (q, nu) = (params.q, params.nu);
        (1.0 - q * nu) / ((1.0 + q) * (1.0 - nu))
    } else {
        1.0
    }
}

fn cone() -> Cdd {
    Complex::new(DoubleDouble::one(), DoubleDouble::zero())
}

fn nodes_dd(radius: f64, n: usize) -> Vec<Cdd> {
    (0..n).map(|k| circle_node::<DoubleDouble>(radius, k, n)).collect()
}

fn check_nodes(sym: &IntervalSymbols, radius: f64, n: usize) -> Result<(), KernelError> {
    let s = sym.pole_map();
    for k in 0..n {
        let z = circle_node::<f64>(radius, k, n);
        let d = sym.min_denominator(z).min((z * s.c + s.d).norm());
        if d < POLE_GUARD {
            return Err(KernelError::PoleOnContour { radius, distance: d });
        }
    }
    Ok(())
}

/// Runs `build` at the automatic radius, retrying once at a nudged radius
/// after a pole collision.
fn with_nudge<V>(radius: f64, mut build: impl FnMut(f64) -> Result<V, KernelError>) -> Result<V, KernelError> {
    match build(radius) {
        Err(KernelError::PoleOnContour { .. }) => build(radius * NUDGE),
        other => other,
    }
}

/// Laurent table `oint A(z) z^m dz / (2 pi i z)` for `m = 0..=span`.
fn single_table(sym: &IntervalSymbols, radius: f64, n: usize, span: usize) -> Result<Vec<f64>, KernelError> {
    check_nodes(sym, radius, n)?;
    let mut acc = vec![Complex::new(DoubleDouble::zero(), DoubleDouble::zero()); span + 1];
    for z in nodes_dd(radius, n) {
        let mut term = sym.propagator(z);
        for slot in acc.iter_mut() {
            *slot = *slot + term;
            term = term * z;
        }
    }
    let inv = DoubleDouble::one() / DoubleDouble::from(n as f64);
    Ok(acc.into_iter().map(|c| (c.re * inv).to_f64()).collect())
}

/// The three Laurent tables of the two-particle formula on one interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoParticleTable {
    pub radius: f64,
    pub nodes: usize,
    pub span: usize,
    /// `oint A(z) z^m dz/(2 pi i z)`, `m = 0..=span`.
    pub single: Vec<f64>,
    /// Coupled double integral at `(a, b)`, row-major in `a`.
    pub coupled: Vec<f64>,
    /// Residue term at `(a, b)`, row-major in `a`.
    pub residue: Vec<f64>,
}

impl TwoParticleTable {
    fn idx(&self, a: i64, b: i64) -> Option<usize> {
        let span = self.span as i64;
        ((0..=span).contains(&a) && (0..=span).contains(&b)).then(|| (a * (span + 1) + b) as usize)
    }

    pub fn single_at(&self, m: i64) -> f64 {
        usize::try_from(m).ok().and_then(|m| self.single.get(m).copied()).unwrap_or(0.0)
    }

    /// `T1(m1) T1(m2) - T2(a, b) + T3(a, b)` with `a = x2 - y1`, `b = x1 - y2`.
    pub fn bracket(&self, m1: i64, m2: i64, a: i64, b: i64) -> f64 {
        let free = self.single_at(m1) * self.single_at(m2);
        match self.idx(a, b) {
            Some(i) => free - self.coupled[i] + self.residue[i],
            None => free,
        }
    }

    pub fn covers(&self, need: usize) -> bool {
        self.span >= need
    }

    fn build(sym: &IntervalSymbols, span: usize, opts: &QuadratureOptions) -> Result<Self, KernelError> {
        with_nudge(sym.radius(), |radius| {
            let refined = refine_by_doubling(opts, |n| {
                let mut out = single_table(sym, radius, n, span)?;
                let (coupled, residue) = pair_tables(sym, radius, n, span)?;
                out.extend(coupled);
                out.extend(residue);
                Ok(out)
            })?;
            let w = span + 1;
            let v = refined.value;
            Ok(Self {
                radius,
                nodes: refined.nodes,
                span,
                single: v[..w].to_vec(),
                coupled: v[w..w + w * w].to_vec(),
                residue: v[w + w * w..].to_vec(),
            })
        })
    }
}

fn pair_tables(sym: &IntervalSymbols, radius: f64, n: usize, span: usize) -> Result<(Vec<f64>, Vec<f64>), KernelError> {
    check_nodes(sym, radius, n)?;
    let z = nodes_dd(radius, n);
    let a: Vec<Cdd> = z.iter().map(|&z| sym.propagator(z)).collect();
    let w = span + 1;
    let inv = DoubleDouble::one() / DoubleDouble::from(n as f64);

    // u[a][k] = sum_j F(z_j, z_k) A(z_j) A(z_k) z_j^a, one column per k.
    let cols: Vec<Vec<Cdd>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut col = vec![Complex::new(DoubleDouble::zero(), DoubleDouble::zero()); w];
            for j in 0..n {
                let mut term = sym.interaction(z[j], z[k]) * a[j] * a[k];
                for slot in col.iter_mut() {
                    *slot = *slot + term;
                    term = term * z[j];
                }
            }
            col
        })
        .collect();
    let coupled = (0..w)
        .into_par_iter()
        .flat_map_iter(|ai| {
            let mut acc = vec![Complex::new(DoubleDouble::zero(), DoubleDouble::zero()); w];
            for k in 0..n {
                let mut term = cols[k][ai];
                for slot in acc.iter_mut() {
                    *slot = *slot + term;
                    term = term * z[k];
                }
            }
            acc.into_iter().map(move |c| (c.re * inv * inv).to_f64()).collect::<Vec<_>>()
        })
        .collect();

    // Residue at z1 = s(z2): res(z2) A(s) s^{a-1} A(z2) z2^b.
    let pole = sym.pole_map();
    let rows: Vec<(Vec<Cdd>, Cdd)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let s = pole.eval(z[k]);
            let base = sym.residue_f(z[k]) * sym.propagator(s) * a[k] / s;
            let mut pows = Vec::with_capacity(w);
            let mut p = cone();
            for _ in 0..w {
                pows.push(base * p);
                p = p * s;
            }
            (pows, z[k])
        })
        .collect();
    let residue = (0..w)
        .into_par_iter()
        .flat_map_iter(|ai| {
            let mut acc = vec![Complex::new(DoubleDouble::zero(), DoubleDouble::zero()); w];
            for (pows, zk) in &rows {
                let mut term = pows[ai];
                for slot in acc.iter_mut() {
                    *slot = *slot + term;
                    term = term * *zk;
                }
            }
            acc.into_iter().map(move |c| (c.re * inv).to_f64()).collect::<Vec<_>>()
        })
        .collect();
    Ok((coupled, residue))
}

/// Shared evaluator of the two-particle kernel, caching tables per
/// `(t - s, s mod J)`.
#[derive(Debug)]
pub struct TwoParticleKernel {
    params: ModelParams,
    frame: Option<TiltFrame>,
    opts: QuadratureOptions,
    span: usize,
    cache: Mutex<HashMap<(i64, usize), Arc<TwoParticleTable>>>,
}

/// Default table span: exponents up to this size are precomputed.
pub const DEFAULT_SPAN: usize = 16;

impl TwoParticleKernel {
    /// Untilted reversed kernel.
    pub fn reversed(params: &ModelParams, opts: QuadratureOptions) -> Result<Self, KernelError> {
        Self::build(params, None, opts)
    }

    /// Tilted kernel `V` at the density of `frame`.
    pub fn tilted(params: &ModelParams, frame: TiltFrame, opts: QuadratureOptions) -> Result<Self, KernelError> {
        Self::build(params, Some(frame), opts)
    }

    fn build(params: &ModelParams, frame: Option<TiltFrame>, opts: QuadratureOptions) -> Result<Self, KernelError> {
        if params.max_occupancy < 2 {
            return Err(KernelError::UnsupportedSpin(params.max_occupancy));
        }
        opts.validate()?;
        Ok(Self { params: *params, frame, opts, span: DEFAULT_SPAN, cache: Mutex::new(HashMap::new()) })
    }

    pub fn with_span(mut self, span: usize) -> Self {
        self.span = span;
        self
    }

    pub fn is_tilted(&self) -> bool {
        self.frame.is_some()
    }

    fn sigma(&self) -> f64 {
        self.frame.as_ref().map_or(1.0, |f| self.params.q.powf(-f.rho))
    }

    /// Tables for the interval `[s, t)`, covering exponents up to `need`.
    pub fn table(&self, t: i64, s: i64, need: usize) -> Result<Arc<TwoParticleTable>, KernelError> {
        let key = (t - s, self.params.phase(s));
        if let Some(tab) = self.cache.lock().expect("kernel cache poisoned").get(&key) {
            if tab.covers(need) {
                return Ok(tab.clone());
            }
        }
        let sym = IntervalSymbols::new(&self.params, t, s, self.sigma())?;
        let tab = Arc::new(TwoParticleTable::build(&sym, need.max(self.span), &self.opts)?);
        self.cache.lock().expect("kernel cache poisoned").insert(key, tab.clone());
        Ok(tab)
    }

    /// Evaluates the kernel; a tilted engine expects tilted queries.
    pub fn evaluate(&self, query: &KernelQuery) -> Result<KernelValue, KernelError> {
        if query.tilted != self.is_tilted() {
            return Err(KernelError::InvalidQuery("query and kernel disagree on tilting".into()));
        }
        let (t, s) = (query.t, query.s);
        let (drift, prefactor) = match &self.frame {
            Some(f) => (f.mu_diff(t, s), f.lambda_ratio(t, s).powi(2)),
            None => (0.0, 1.0),
        };
        let m1 = integral_exponent(query.x1 - query.y1 + drift)?;
        let m2 = integral_exponent(query.x2 - query.y2 + drift)?;
        let a = integral_exponent(query.x2 - query.y1 + drift)?;
        let b = integral_exponent(query.x1 - query.y2 + drift)?;
        let gap = integral_exponent(query.y2 - query.y1)?;
        let need = [m1, m2, a, b].into_iter().max().unwrap_or(0).max(0) as usize;
        let tab = self.table(t, s, need)?;
        let c = coincidence_weight(&self.params, gap == 0);
        Ok(KernelValue { value: prefactor * c * tab.bracket(m1, m2, a, b), nodes: tab.nodes, radius: tab.radius })
    }
}

/// Two-particle transition probability of the reversed process.
pub fn two_particle_reversed(
    params: &ModelParams,
    query: &KernelQuery,
    opts: QuadratureOptions,
) -> Result<KernelValue, KernelError> {
    TwoParticleKernel::reversed(params, opts)?.evaluate(query)
}

/// Tilted two-particle kernel `V`.
pub fn tilted_v(
    params: &ModelParams,
    frame: &TiltFrame,
    query: &KernelQuery,
    opts: QuadratureOptions,
) -> Result<KernelValue, KernelError> {
    TwoParticleKernel::tilted(params, frame.clone(), opts)?.evaluate(query)
}

/// One-particle kernel `p(t, s, x)`. Untilted it is the law of the total
/// leftward jump `x`; tilted it is the tilted and centered walk.
pub fn one_particle_kernel(
    params: &ModelParams,
    frame: Option<&TiltFrame>,
    t: i64,
    s: i64,
    x: f64,
    opts: QuadratureOptions,
) -> Result<KernelValue, KernelError> {
    let (drift, prefactor, sigma) = match frame {
        Some(f) => (f.mu_diff(t, s), f.lambda_ratio(t, s), params.q.powf(-f.rho)),
        None => (0.0, 1.0, 1.0),
    };
    let m = integral_exponent(x + drift)?;
    let sym = IntervalSymbols::new(params, t, s, sigma)?;
    if m < 0 {
        return Ok(KernelValue { value: 0.0, nodes: 0, radius: sym.single_radius() });
    }
    with_nudge(sym.single_radius(), |radius| {
        let refined = refine_by_doubling(&opts, |n| Ok(vec![single_table(&sym, radius, n, m as usize)?[m as usize]]))?;
        Ok(KernelValue { value: prefactor * refined.value[0], nodes: refined.nodes, radius })
    })
}

/// Complex residue helper exposed for diagnostics: the analytic residue of
/// the interaction ratio at `z1 = s(z2)` on the interval `[s, t)`.
pub fn residue_f(params: &ModelParams, sigma: f64, z2: Complex<f64>) -> Result<Complex<f64>, KernelError> {
    let sym = IntervalSymbols::new(params, 0, 0, sigma)?;
    Ok(sym.residue_f(z2))
}
