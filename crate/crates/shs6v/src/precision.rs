//! Scalar abstraction over `f64` and a software double-double type.
//!
//! The double-double arithmetic uses the usual error-free transforms
//! (two-sum and an FMA-based two-product). It backs the extended-precision
//! toggle of the weight tables and of the contour quadrature.

use num_complex::Complex;
use num_traits::{Num, One, Zero};
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Rem, Sub, SubAssign};

/// Precision used by routines that offer an extended-precision path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Precision {
    #[default]
    Double,
    Extended,
}

/// Real scalar usable by the generic numerical kernels.
pub trait Real:
    Copy + fmt::Debug + PartialOrd + Num + Neg<Output = Self> + AddAssign + SubAssign + MulAssign + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn pi() -> Self;
    /// Returns `(cos x, sin x)`.
    fn cos_sin(self) -> (Self, Self);

    fn from_i64(n: i64) -> Self {
        Self::from_f64(n as f64)
    }

    /// Integer power by repeated squaring.
    fn powi(self, n: i32) -> Self {
        if n < 0 {
            return Self::one() / self.powi(-n);
        }
        let mut base = self;
        let mut e = n as u32;
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn pi() -> Self {
        std::f64::consts::PI
    }
    fn cos_sin(self) -> (Self, Self) {
        let (s, c) = self.sin_cos();
        (c, s)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

/// Modulus of a complex number over any [`Real`].
pub fn modulus<T: Real>(z: Complex<T>) -> T {
    (z.re * z.re + z.im * z.im).sqrt()
}

/// Point on the circle of radius `r` at angle `2 pi k / n`.
pub fn circle_node<T: Real>(r: f64, k: usize, n: usize) -> Complex<T> {
    let angle = T::from_f64(2.0) * T::pi() * T::from_f64(k as f64) / T::from_f64(n as f64);
    let (c, s) = angle.cos_sin();
    let r = T::from_f64(r);
    Complex::new(r * c, r * s)
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Clone, Copy, Default)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub const fn new(hi: f64, lo: f64) -> Self {
        Self { hi, lo }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let (h, l) = quick_two_sum(hi, lo);
        Self { hi: h, lo: l }
    }

    fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        Self::renorm(p, e + self.lo * b)
    }

    fn div_f64_exact(self, b: f64) -> Self {
        let q1 = self.hi / b;
        let r = self - Self::from(b).mul_f64(q1);
        let q2 = r.hi / b;
        let r = r - Self::from(b).mul_f64(q2);
        let q3 = r.hi / b;
        Self::renorm(q1, q2) + Self::from(q3)
    }
}

impl From<f64> for DoubleDouble {
    fn from(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }
}

impl fmt::Debug for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DoubleDouble({:e} + {:e})", self.hi, self.lo)
    }
}

impl fmt::Display for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.hi + self.lo)
    }
}

impl PartialEq for DoubleDouble {
    fn eq(&self, other: &Self) -> bool {
        self.hi == other.hi && self.lo == other.lo
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            ord => ord,
        }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, b: Self) -> Self {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Self::renorm(s, e + f)
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, b: Self) -> Self {
        self + (-b)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, b: Self) -> Self {
        let (p, e) = two_prod(self.hi, b.hi);
        Self::renorm(p, e + (self.hi * b.lo + self.lo * b.hi))
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, b: Self) -> Self {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        Self::renorm(q1, q2) + Self::from(q3)
    }
}

impl Rem for DoubleDouble {
    type Output = Self;
    fn rem(self, b: Self) -> Self {
        let n = (self / b).trunc();
        self - n * b
    }
}

impl DoubleDouble {
    fn trunc(self) -> Self {
        let hi = self.hi.trunc();
        if hi == self.hi {
            Self::renorm(hi, self.lo.trunc())
        } else {
            Self::from(hi)
        }
    }
}

impl AddAssign for DoubleDouble {
    fn add_assign(&mut self, b: Self) {
        *self = *self + b;
    }
}

impl SubAssign for DoubleDouble {
    fn sub_assign(&mut self, b: Self) {
        *self = *self - b;
    }
}

impl MulAssign for DoubleDouble {
    fn mul_assign(&mut self, b: Self) {
        *self = *self * b;
    }
}

impl Zero for DoubleDouble {
    fn zero() -> Self {
        Self::from(0.0)
    }
    fn is_zero(&self) -> bool {
        self.hi == 0.0 && self.lo == 0.0
    }
}

impl One for DoubleDouble {
    fn one() -> Self {
        Self::from(1.0)
    }
}

impl Num for DoubleDouble {
    type FromStrRadixErr = std::num::ParseFloatError;
    fn from_str_radix(s: &str, _radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        s.parse::<f64>().map(Self::from)
    }
}

const DD_PI: DoubleDouble = DoubleDouble::new(std::f64::consts::PI, 1.224_646_799_147_353_2e-16);

/// Taylor series of sine and cosine for `|r| <= pi/4`.
fn dd_cos_sin_reduced(r: DoubleDouble) -> (DoubleDouble, DoubleDouble) {
    let r2 = r * r;
    let mut sin = r;
    let mut cos = DoubleDouble::one();
    let mut term_s = r;
    let mut term_c = DoubleDouble::one();
    let mut k = 1.0_f64;
    loop {
        term_c = -(term_c * r2).div_f64_exact((2.0 * k - 1.0) * (2.0 * k));
        term_s = -(term_s * r2).div_f64_exact((2.0 * k) * (2.0 * k + 1.0));
        cos += term_c;
        sin += term_s;
        if term_c.hi.abs() < 1e-34 && term_s.hi.abs() < 1e-34 {
            break;
        }
        k += 1.0;
        if k > 40.0 {
            break;
        }
    }
    (cos, sin)
}

impl Real for DoubleDouble {
    fn from_f64(x: f64) -> Self {
        Self::from(x)
    }
    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
    fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }
    fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Self::zero();
        }
        let x = self.hi.sqrt();
        let xx = Self::from(x);
        let corr = (self - xx * xx).div_f64_exact(2.0 * x);
        xx + corr
    }
    fn pi() -> Self {
        DD_PI
    }
    fn cos_sin(self) -> (Self, Self) {
        let half_pi = DD_PI.div_f64_exact(2.0);
        let k = (self.to_f64() / std::f64::consts::FRAC_PI_2).round();
        let r = self - half_pi.mul_f64(k);
        let (c, s) = dd_cos_sin_reduced(r);
        match (k as i64).rem_euclid(4) {
            0 => (c, s),
            1 => (-s, c),
            2 => (-c, -s),
            _ => (s, -c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type DD = DoubleDouble;

    #[test]
    fn division_is_double_double_accurate() {
        let x = DD::from(3.0) / DD::from(7.0);
        let back = x * DD::from(7.0) - DD::from(3.0);
        assert!(back.to_f64().abs() < 1e-30, "{back:?}");
        assert!(x.lo() != 0.0);
    }

    #[test]
    fn sqrt_two_squares_back() {
        let s = DD::from(2.0).sqrt();
        let err = s * s - DD::from(2.0);
        assert!(err.to_f64().abs() < 1e-30);
    }

    #[test]
    fn trig_matches_f64_and_pythagoras() {
        for k in -20..=20 {
            let x = 0.37 * k as f64;
            let (c, s) = DD::from(x).cos_sin();
            assert!((c.to_f64() - x.cos()).abs() < 1e-15);
            assert!((s.to_f64() - x.sin()).abs() < 1e-15);
            let one = c * c + s * s - DD::one();
            assert!(one.to_f64().abs() < 1e-30, "{x} {one:?}");
        }
    }

    #[test]
    fn roots_of_unity_close_up() {
        let n = 96;
        let mut acc = Complex::new(DD::zero(), DD::zero());
        for k in 0..n {
            acc = acc + circle_node::<DD>(1.0, k, n);
        }
        assert!(modulus(acc).to_f64() < 1e-29);
        let z = circle_node::<DD>(1.0, 1, n);
        let mut p = Complex::new(DD::one(), DD::zero());
        for _ in 0..n {
            p = p * z;
        }
        assert!((p.re - DD::one()).to_f64().abs() < 1e-29);
        assert!(p.im.to_f64().abs() < 1e-29);
    }

    #[test]
    fn powi_agrees_between_scalars() {
        let a = DD::from(1.1).powi(-7).to_f64();
        assert!((a - 1.1f64.powi(-7)).abs() < 1e-15);
    }
}
