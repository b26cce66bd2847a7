//! q-deformed arithmetic: q-Pochhammer symbols of any integer order,
//! symmetric q-integers and binomials, and the regularized terminating
//! 4-phi-3 sum that enters the fused vertex weights.

pub use crate::params::{ModelParams, Scaling};
use crate::precision::Real;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QError {
    #[error("division by zero: factor 1 - a q^{exponent} vanishes (a={a}, q={q})")]
    DivisionByZero { a: f64, q: f64, exponent: i64 },
}

const POLE_TOL: f64 = 1e-300;

/// `(a; q)_n` for any integer `n`, generic over the scalar type.
pub fn q_pochhammer_in<T: Real>(a: T, q: T, n: i64) -> Result<T, QError> {
    if n >= 0 {
        let mut acc = T::one();
        let mut aq = a;
        for _ in 0..n {
            acc *= T::one() - aq;
            aq *= q;
        }
        Ok(acc)
    } else {
        // prod_{k=0}^{-n-1} (1 - a q^{n+k})^{-1}
        let mut acc = T::one();
        let mut aq = a * q.powi(n as i32);
        for k in 0..(-n) {
            let f = T::one() - aq;
            if f.abs().to_f64() <= POLE_TOL {
                return Err(QError::DivisionByZero { a: a.to_f64(), q: q.to_f64(), exponent: n + k });
            }
            acc *= f;
            aq *= q;
        }
        Ok(T::one() / acc)
    }
}

/// `(a; q)_n` for any integer `n`.
pub fn q_pochhammer(a: f64, q: f64, n: i64) -> Result<f64, QError> {
    q_pochhammer_in(a, q, n)
}

/// Symmetric q-integer `[n]_q = (q^n - q^-n) / (q - q^-1)`, with `[n]_1 = n`.
pub fn q_bracket(n: i64, q: f64) -> f64 {
    if q == 1.0 {
        return n as f64;
    }
    let n = n as i32;
    (q.powi(n) - q.powi(-n)) / (q - 1.0 / q)
}

/// Symmetric q-factorial `[n]_q! = [1]_q ... [n]_q`.
pub fn q_factorial(n: u32, q: f64) -> f64 {
    (1..=n as i64).map(|k| q_bracket(k, q)).product()
}

/// Symmetric q-binomial built from [`q_factorial`]; zero outside `0..=n`.
pub fn q_binomial(n: u32, k: i64, q: f64) -> f64 {
    if k < 0 || k > n as i64 {
        return 0.0;
    }
    let k = k as u32;
    q_factorial(n, q) / (q_factorial(k, q) * q_factorial(n - k, q))
}

/// Regularized terminating sum
/// `sum_k z^k (q^-n; q)_k / (q; q)_k prod_i (a_i; q)_k (b_i q^k; q)_{n-k}`.
///
/// Prefix products carry the `a_i` factors and suffix products the `b_i`
/// factors, so the only division is by `(q; q)_k`.
pub fn reg_4phi3_in<T: Real>(n: usize, a: [T; 3], b: [T; 3], q: T, z: T) -> Result<T, QError> {
    // suffix[i][k] = prod_{j=k}^{n-1} (1 - b_i q^j) = (b_i q^k; q)_{n-k}
    let mut suffix = [vec![T::one(); n + 1], vec![T::one(); n + 1], vec![T::one(); n + 1]];
    for (i, bi) in b.iter().enumerate() {
        for k in (0..n).rev() {
            suffix[i][k] = suffix[i][k + 1] * (T::one() - *bi * q.powi(k as i32));
        }
    }
    let q_inv_n = q.powi(-(n as i32));
    let mut total = T::zero();
    let mut ratio = T::one(); // z^k (q^-n;q)_k / (q;q)_k prod (a_i;q)_k
    let mut qk = T::one();
    let [s0, s1, s2] = &suffix;
    for (k, ((&f0, &f1), &f2)) in s0.iter().zip(s1).zip(s2).enumerate().take(n + 1) {
        let term = ratio * f0 * f1 * f2;
        total += term;
        if k == n {
            break;
        }
        let den = T::one() - qk * q;
        if den.abs().to_f64() <= POLE_TOL {
            return Err(QError::DivisionByZero { a: q.to_f64(), q: q.to_f64(), exponent: k as i64 });
        }
        let mut num = z * (T::one() - q_inv_n * qk);
        for ai in a {
            num *= T::one() - ai * qk;
        }
        ratio = ratio * num / den;
        qk *= q;
    }
    Ok(total)
}

pub fn reg_4phi3(n: usize, a: [f64; 3], b: [f64; 3], q: f64, z: f64) -> Result<f64, QError> {
    reg_4phi3_in(n, a, b, q, z)
}
