//! Rational symbols of the reversed chain over a time interval `[s, t)`.
//!
//! All symbols are written in the contour variable `z`; the untilted
//! symbols are evaluated at `w = sigma z` with `sigma = q^{-rho}` for the
//! tilted kernel and `sigma = 1` otherwise. The powers `z^{mu(k)}` of the
//! tilted per-step factors are regrouped into the integer exponents of the
//! caller, so only rational functions of `z` appear here.

use num_complex::Complex;

use super::KernelError;
use crate::params::ModelParams;
use crate::precision::{circle_node, Real};

/// Nodes used to estimate suprema over a circle when choosing radii.
const SUP_SAMPLES: usize = 512;
/// Smallest half-radius for the one-particle contour.
const SINGLE_RADIUS_FLOOR: f64 = 1e-2;

fn cst<T: Real>(x: f64) -> Complex<T> {
    Complex::new(T::from_f64(x), T::zero())
}

/// Mobius map `(a w + b) / (c w + d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mobius {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mobius {
    pub fn eval<T: Real>(&self, w: Complex<T>) -> Complex<T> {
        (w * T::from_f64(self.a) + cst(self.b)) / (w * T::from_f64(self.c) + cst(self.d))
    }

    pub fn inverse(&self) -> Mobius {
        Mobius { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    /// Point sent to infinity.
    pub fn pole(&self) -> f64 {
        -self.d / self.c
    }

    /// Point sent to zero.
    pub fn zero(&self) -> f64 {
        -self.b / self.a
    }
}

/// Symbols of the two-particle kernel over `[s, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSymbols {
    pub q: f64,
    pub nu: f64,
    /// Argument scale `q^{-rho}` (1 when untilted).
    pub sigma: f64,
    /// Full periods `floor((t-s)/J)`.
    pub periods: usize,
    /// `alpha` and `alpha q^J` of the per-period factor.
    pub period_alpha: (f64, f64),
    /// `alpha(k)` for the remainder steps `k = s + J floor((t-s)/J), ..., t-1`.
    pub remainder: Vec<f64>,
    /// Every distinct `alpha(k)` met on the interval.
    pub step_alphas: Vec<f64>,
}

impl IntervalSymbols {
    pub fn new(params: &ModelParams, t: i64, s: i64, sigma: f64) -> Result<Self, KernelError> {
        if t < s {
            return Err(KernelError::InvalidQuery(format!("t={t} precedes s={s}")));
        }
        let j = params.line_capacity as i64;
        let periods = ((t - s) / j) as usize;
        let remainder = (s + j * periods as i64..t).map(|k| params.alpha_at(k)).collect();
        let mut step_alphas: Vec<f64> = (s..t.min(s + j)).map(|k| params.alpha_at(k)).collect();
        step_alphas.dedup();
        Ok(Self {
            q: params.q,
            nu: params.nu,
            sigma,
            periods,
            period_alpha: (params.alpha, params.alpha * params.q.powi(j as i32)),
            remainder,
            step_alphas,
        })
    }

    fn ratio<T: Real>(&self, w: Complex<T>, num_alpha: f64, den_alpha: f64) -> Complex<T> {
        let num = w * T::from_f64(1.0 + num_alpha) - cst(self.nu + num_alpha);
        let den = w * T::from_f64(1.0 + den_alpha) - cst(self.nu + den_alpha);
        num / den
    }

    /// `D~(sigma z)^{floor((t-s)/J)} R~(sigma z, t, s)`.
    pub fn propagator<T: Real>(&self, z: Complex<T>) -> Complex<T> {
        let w = z * T::from_f64(self.sigma);
        let mut acc = cst::<T>(1.0);
        if self.periods > 0 {
            let (a, aj) = self.period_alpha;
            let d = self.ratio(w, aj, a);
            for _ in 0..self.periods {
                acc = acc * d;
            }
        }
        for &a in &self.remainder {
            acc = acc * self.ratio(w, a * self.q, a);
        }
        acc
    }

    /// Same symbol as a product of the per-step factors over `[s, t)`.
    pub fn propagator_stepwise<T: Real>(&self, z: Complex<T>, alphas: &[f64]) -> Complex<T> {
        let w = z * T::from_f64(self.sigma);
        alphas.iter().fold(cst::<T>(1.0), |acc, &a| acc * self.ratio(w, a * self.q, a))
    }

    /// Poles of the propagator in `z`.
    pub fn propagator_poles(&self) -> Vec<f64> {
        if self.periods == 0 && self.remainder.is_empty() {
            return Vec::new();
        }
        self.step_alphas.iter().map(|a| (self.nu + a) / (1.0 + a) / self.sigma).collect()
    }

    /// Smallest modulus of a propagator denominator at `z`.
    pub fn min_denominator(&self, z: Complex<f64>) -> f64 {
        let w = z * self.sigma;
        self.step_alphas.iter().map(|a| (w * (1.0 + a) - (self.nu + a)).norm()).fold(f64::INFINITY, f64::min)
    }

    fn interaction_terms<T: Real>(&self, z1: Complex<T>, z2: Complex<T>) -> (Complex<T>, Complex<T>) {
        let (q, nu) = (self.q, self.nu);
        let w1 = z1 * T::from_f64(self.sigma);
        let w2 = z2 * T::from_f64(self.sigma);
        let base = cst::<T>(q * nu - nu);
        let cross = w1 * w2 * T::from_f64(q - 1.0);
        let num = base + w2 * T::from_f64(nu - q) + w1 * T::from_f64(1.0 - q * nu) + cross;
        let den = base + w1 * T::from_f64(nu - q) + w2 * T::from_f64(1.0 - q * nu) + cross;
        (num, den)
    }

    /// Interaction ratio `F(z1, z2)`.
    pub fn interaction<T: Real>(&self, z1: Complex<T>, z2: Complex<T>) -> Complex<T> {
        let (num, den) = self.interaction_terms(z1, z2);
        num / den
    }

    /// Pole map of the untilted variable, `w1 = s~(w2)`.
    pub fn pole_map_untilted(&self) -> Mobius {
        let (q, nu) = (self.q, self.nu);
        Mobius { a: 1.0 - q * nu, b: -nu * (1.0 - q), c: 1.0 - q, d: q - nu }
    }

    /// Pole map in `z`: `s(z) = s~(sigma z) / sigma`.
    pub fn pole_map(&self) -> Mobius {
        let m = self.pole_map_untilted();
        Mobius { a: m.a, b: m.b / self.sigma, c: m.c * self.sigma, d: m.d }
    }

    /// Inverse pole map `p = s^{-1}`.
    pub fn inverse_pole_map(&self) -> Mobius {
        self.pole_map().inverse()
    }

    /// Residue at `z1 = s(z2)` of the interaction ratio in `z1`:
    /// numerator over the `z1`-derivative of the denominator.
    pub fn residue_f<T: Real>(&self, z2: Complex<T>) -> Complex<T> {
        let z1 = self.pole_map().eval(z2);
        let (num, _) = self.interaction_terms(z1, z2);
        let s = T::from_f64(self.sigma);
        let dden = (cst::<T>(self.nu - self.q) + z2 * (s * T::from_f64(self.q - 1.0))) * s;
        num / dden
    }

    /// Radius for the one-particle integrand alone, whose only singularities
    /// are the propagator poles and `z = 0`. Staying close to them keeps
    /// `|z|^m` small, so long jumps do not drown in rounding noise.
    pub fn single_radius(&self) -> f64 {
        let pole = self.propagator_poles().into_iter().map(f64::abs).fold(0.0, f64::max);
        2.0 * pole.max(SINGLE_RADIUS_FLOOR)
    }

    /// Contour radius beyond every singularity of the three integrands,
    /// with a margin factor of two, iterated to a fixed point.
    pub fn radius(&self) -> f64 {
        let s = self.pole_map();
        let p = self.inverse_pole_map();
        let mut base: f64 = 1.0;
        for pole in self.propagator_poles() {
            base = base.max(pole.abs());
            base = base.max(p.eval(Complex::new(pole, 0.0)).norm());
        }
        for x in [s.pole(), s.zero(), p.pole(), p.zero()] {
            if x.is_finite() {
                base = base.max(x.abs());
            }
        }
        let mut r = 2.0 * base;
        for _ in 0..32 {
            let sup = (0..SUP_SAMPLES)
                .map(|k| {
                    let z = circle_node::<f64>(r, k, SUP_SAMPLES);
                    s.eval(z).norm().max(p.eval(z).norm())
                })
                .fold(0.0, f64::max);
            let next = 2.0 * base.max(sup);
            if (next - r).abs() <= 1e-12 * r {
                break;
            }
            r = next;
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precision::DoubleDouble;

    fn params() -> ModelParams {
        ModelParams::stochastic(2.0, 3, 2, -0.04).unwrap()
    }

    #[test]
    fn period_telescopes_to_stepwise_product() {
        let p = params();
        for (t, s) in [(5, 0), (6, 1), (3, 3), (9, 2)] {
            let sym = IntervalSymbols::new(&p, t, s, 0.8).unwrap();
            let alphas: Vec<f64> = (s..t).map(|k| p.alpha_at(k)).collect();
            for z in [Complex::new(2.0, 1.0), Complex::new(-0.7, 3.0)] {
                let a = sym.propagator(z);
                let b = sym.propagator_stepwise(z, &alphas);
                assert!((a - b).norm() < 1e-13 * a.norm(), "{t} {s}");
            }
        }
    }

    #[test]
    fn pole_map_inverse_round_trip() {
        let sym = IntervalSymbols::new(&params(), 4, 0, 0.7).unwrap();
        let s = sym.pole_map();
        let p = sym.inverse_pole_map();
        for z in [Complex::new(1.3, -0.4), Complex::new(-3.0, 2.0), Complex::new(0.1, 0.1)] {
            assert!((p.eval(s.eval(z)) - z).norm() < 1e-12 * (1.0 + z.norm()));
        }
    }

    #[test]
    fn pole_map_zeroes_the_denominator() {
        let sym = IntervalSymbols::new(&params(), 4, 0, 0.6).unwrap();
        let z2 = Complex::new(2.5, 1.5);
        let z1 = sym.pole_map().eval(z2);
        let (_, den) = sym.interaction_terms(z1, z2);
        assert!(den.norm() < 1e-13);
    }

    #[test]
    fn double_double_agrees_with_double() {
        let sym = IntervalSymbols::new(&params(), 7, 1, 1.0).unwrap();
        let z = Complex::new(1.7, -2.2);
        let zd = Complex::new(DoubleDouble::from(1.7), DoubleDouble::from(-2.2));
        let a = sym.propagator(z) * sym.interaction(z, z.conj());
        let b = sym.propagator(zd) * sym.interaction(zd, zd.conj());
        assert!((a.re - b.re.to_f64()).abs() < 1e-13 && (a.im - b.im.to_f64()).abs() < 1e-13);
    }

    #[test]
    fn single_radius_encloses_poles() {
        let sym = IntervalSymbols::new(&params(), 4, 0, 1.0).unwrap();
        for pole in sym.propagator_poles() {
            assert!(pole.abs() <= sym.single_radius() / 2.0);
        }
        assert!(sym.single_radius() < sym.radius());
    }

    #[test]
    fn radius_clears_singularities() {
        let sym = IntervalSymbols::new(&params(), 4, 0, 1.0).unwrap();
        let r = sym.radius();
        for pole in sym.propagator_poles() {
            assert!(pole.abs() < r / 2.0 + 1e-12);
        }
        assert!(sym.pole_map().pole().abs() <= r / 2.0 + 1e-12);
    }
}
