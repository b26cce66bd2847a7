//! Stochastic vertex weights: the general fused L-matrix, its `J = 1`
//! closed form, and dense per-`alpha` tables used by the samplers and
//! the enumeration oracles.

use crate::params::{ModelParams, ParamError};
use crate::precision::{DoubleDouble, Precision, Real};
use crate::qspecial::{q_pochhammer_in, reg_4phi3_in, QError};
use serde::Serialize;
use thiserror::Error;

/// Rows may dip below zero by this much before being clipped.
pub const CLIP_TOL: f64 = 1e-12;
/// Row-sum deviation that is reported as a warning.
pub const WARN_TOL: f64 = 1e-10;
/// Row-sum deviation that is a hard error.
pub const HARD_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("vertex index out of range: ({i1},{j1}) -> ({i2},{j2}) with I={max_occupancy}, J={line_capacity}")]
    Domain { i1: usize, j1: usize, i2: usize, j2: usize, max_occupancy: usize, line_capacity: usize },
    #[error("row ({i1},{j1}) is not a probability vector: row sum deviates by {deviation:e}, min entry {min_entry:e}")]
    Stochasticity { i1: usize, j1: usize, deviation: f64, min_entry: f64 },
    #[error(transparent)]
    Q(#[from] QError),
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// General fused weight `L^{(J)}_alpha(i1, j1; i2, j2)` over any scalar.
///
/// The power-of-`q` prefactor (including `nu^(j1-i2)`) is collected into a
/// single integer count of quarter powers of `q`. At parameter values where
/// a Pochhammer factor of the closed form has a removable pole, the weight
/// is taken as the symmetric average at `alpha (1 +- 1e-8)` in double-double.
pub fn l_general_in<T: Real>(
    params: &ModelParams,
    alpha: f64,
    line_capacity: usize,
    i1: usize,
    j1: usize,
    i2: usize,
    j2: usize,
) -> Result<T, WeightError> {
    match l_closed_form::<T>(params, T::from_f64(alpha), line_capacity, i1, j1, i2, j2) {
        Err(WeightError::Q(_)) => {
            let h = DoubleDouble::from(alpha) * DoubleDouble::from(1e-8);
            let a = DoubleDouble::from(alpha);
            let up = l_closed_form::<DoubleDouble>(params, a + h, line_capacity, i1, j1, i2, j2)?;
            let down = l_closed_form::<DoubleDouble>(params, a - h, line_capacity, i1, j1, i2, j2)?;
            Ok(T::from_f64(((up + down) * DoubleDouble::from(0.5)).to_f64()))
        }
        other => other,
    }
}

fn l_closed_form<T: Real>(
    params: &ModelParams,
    a: T,
    line_capacity: usize,
    i1: usize,
    j1: usize,
    i2: usize,
    j2: usize,
) -> Result<T, WeightError> {
    let cap_i = params.max_occupancy;
    if i1 > cap_i || i2 > cap_i || j1 > line_capacity || j2 > line_capacity {
        return Err(WeightError::Domain { i1, j1, i2, j2, max_occupancy: cap_i, line_capacity });
    }
    if i1 + j1 != i2 + j2 {
        return Ok(T::zero());
    }
    let (i1, j1, i2, j2) = (i1 as i32, j1 as i32, i2 as i32, j2 as i32);
    let spin = cap_i as i32;
    let jc = line_capacity as i32;
    let q = T::from_f64(params.q);
    let nu = T::one() / q.powi(spin);

    let quarters = (2 * j1 - j1 * j1) - (2 * j2 - j2 * j2) + (i1 * i1 + i2 * i2) + 2 * (i2 * (j2 - 1) + i1 * j1)
        - 4 * spin * (j1 - i2);
    let q_quarter = q.sqrt().sqrt();
    let prefactor = q_quarter.powi(quarters);

    let numer = a.powi(j2 - j1 + i2) * q_pochhammer_in(-a / nu, q, (j2 - i1) as i64)?;
    let denom = q_pochhammer_in(q, q, i2 as i64)?
        * q_pochhammer_in(-a, q, (i2 + j2) as i64)?
        * q_pochhammer_in(q.powi(jc + 1 - j1), q, (j1 - j2) as i64)?;

    let phi = reg_4phi3_in(
        i2 as usize,
        [T::one() / q.powi(i1), -a * q.powi(jc), -q * nu / a],
        [nu, q.powi(1 + j2 - i1), q.powi(jc + 1 - i2 - j2)],
        q,
        q,
    )?;
    Ok(prefactor * numer / denom * phi)
}

/// General fused weight in double precision.
pub fn l_general(
    params: &ModelParams,
    alpha: f64,
    line_capacity: usize,
    i1: usize,
    j1: usize,
    i2: usize,
    j2: usize,
) -> Result<f64, WeightError> {
    l_general_in::<f64>(params, alpha, line_capacity, i1, j1, i2, j2)
}

/// Closed-form `J = 1` weight with `m` incoming vertical lines.
pub fn l_j1(params: &ModelParams, alpha_t: f64, m: usize, j1: usize, i2: usize, j2: usize) -> Result<f64, WeightError> {
    let cap_i = params.max_occupancy;
    if m > cap_i || i2 > cap_i || j1 > 1 || j2 > 1 {
        return Err(WeightError::Domain { i1: m, j1, i2, j2, max_occupancy: cap_i, line_capacity: 1 });
    }
    if m + j1 != i2 + j2 {
        return Ok(0.0);
    }
    let qm = params.q.powi(m as i32);
    let den = 1.0 + alpha_t;
    Ok(match (j1, j2) {
        (0, 0) => (1.0 + alpha_t * qm) / den,
        (0, 1) => alpha_t * (1.0 - qm) / den,
        (1, 0) => (1.0 - params.nu * qm) / den,
        _ => (alpha_t + params.nu * qm) / den,
    })
}

/// Means of the `J = 1` environment at a site holding `eta` particles:
/// `B` (a particle leaves when no line comes in) and `B'` (the incoming
/// line passes through).
pub fn bernoulli_means(params: &ModelParams, alpha_t: f64, eta: usize) -> (f64, f64) {
    let qe = params.q.powi(eta as i32);
    let den = 1.0 + alpha_t;
    (alpha_t * (1.0 - qe) / den, (alpha_t + params.nu * qe) / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableOptions {
    /// Reject rows that are not probability vectors.
    pub validate: bool,
    pub precision: Precision,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self { validate: true, precision: Precision::Double }
    }
}

/// Dense weight table on `{0..I} x {0..J}` squared.
#[derive(Debug, Clone, Serialize)]
pub struct VertexWeightTable {
    pub params: ModelParams,
    pub alpha_used: f64,
    pub line_capacity: usize,
    /// Row-major, row `(i1, j1)` and column `(i2, j2)`, each flattened as `i * (J+1) + j`.
    entries: Vec<f64>,
    /// Largest row-sum deviation before clipping and renormalization.
    pub max_row_deviation: f64,
    pub renormalized_rows: usize,
}

impl VertexWeightTable {
    fn width(&self) -> usize {
        (self.params.max_occupancy + 1) * (self.line_capacity + 1)
    }

    fn index(&self, i: usize, j: usize) -> usize {
        i * (self.line_capacity + 1) + j
    }

    pub fn weight(&self, i1: usize, j1: usize, i2: usize, j2: usize) -> f64 {
        let w = self.width();
        self.entries[self.index(i1, j1) * w + self.index(i2, j2)]
    }

    /// Row of output weights indexed by `i2 * (J+1) + j2`.
    pub fn row(&self, i1: usize, j1: usize) -> &[f64] {
        let w = self.width();
        let r = self.index(i1, j1);
        &self.entries[r * w..(r + 1) * w]
    }

    /// Nonzero outputs `((i2, j2), weight)` of a row in column order.
    pub fn outputs(&self, i1: usize, j1: usize) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        let jw = self.line_capacity + 1;
        self.row(i1, j1).iter().enumerate().filter(|(_, &w)| w > 0.0).map(move |(c, &w)| ((c / jw, c % jw), w))
    }

    /// Inverse-CDF draw in column order. For `J = 1` this reproduces the
    /// single-uniform coupling `B = 1{u < P(B)}`, `B' = 1{u < P(B')}`.
    pub fn sample(&self, i1: usize, j1: usize, u: f64) -> (usize, usize) {
        let jw = self.line_capacity + 1;
        let mut acc = 0.0;
        let mut last = None;
        for (c, &w) in self.row(i1, j1).iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = Some(c);
            if u < acc {
                return (c / jw, c % jw);
            }
        }
        let c = last.expect("stochastic row has a positive entry");
        (c / jw, c % jw)
    }
}

/// Builds the table for `alpha` and horizontal capacity `line_capacity`.
pub fn build_table(
    params: &ModelParams,
    alpha: f64,
    line_capacity: usize,
    opts: TableOptions,
) -> Result<VertexWeightTable, WeightError> {
    if opts.validate {
        let check = ModelParams { alpha, line_capacity, ..*params };
        // the rotated alpha(t) = alpha q^k stays inside the admissible band
        // exactly when the fused parameter does
        if !(params.q > 1.0 && alpha < 0.0 && alpha > check.alpha_lower_bound()) {
            return Err(WeightError::Param(ParamError::NotStochastic {
                q: params.q,
                alpha,
                lower: check.alpha_lower_bound(),
            }));
        }
    }
    let ci = params.max_occupancy;
    let jw = line_capacity + 1;
    let width = (ci + 1) * jw;
    let mut entries = vec![0.0; width * width];
    let mut max_dev: f64 = 0.0;
    let mut renormalized = 0;
    for i1 in 0..=ci {
        for j1 in 0..=line_capacity {
            let r = i1 * jw + j1;
            let row = &mut entries[r * width..(r + 1) * width];
            for i2 in 0..=ci {
                for j2 in 0..=line_capacity {
                    if i1 + j1 != i2 + j2 {
                        continue;
                    }
                    row[i2 * jw + j2] = match opts.precision {
                        Precision::Double => l_general(params, alpha, line_capacity, i1, j1, i2, j2)?,
                        Precision::Extended => {
                            l_general_in::<DoubleDouble>(params, alpha, line_capacity, i1, j1, i2, j2)?.to_f64()
                        }
                    };
                }
            }
            let sum: f64 = row.iter().sum();
            let min_entry = row.iter().cloned().fold(f64::INFINITY, f64::min);
            let dev = (sum - 1.0).abs();
            max_dev = max_dev.max(dev);
            if opts.validate && (dev > HARD_TOL || min_entry < -HARD_TOL) {
                return Err(WeightError::Stochasticity { i1, j1, deviation: dev, min_entry });
            }
            if opts.validate {
                let mut touched = dev != 0.0;
                for w in row.iter_mut() {
                    if *w < 0.0 && *w >= -CLIP_TOL.max(HARD_TOL) {
                        *w = 0.0;
                        touched = true;
                    }
                }
                if touched {
                    let s: f64 = row.iter().sum();
                    row.iter_mut().for_each(|w| *w /= s);
                    renormalized += 1;
                }
            }
        }
    }
    Ok(VertexWeightTable {
        params: *params,
        alpha_used: alpha,
        line_capacity,
        entries,
        max_row_deviation: max_dev,
        renormalized_rows: renormalized,
    })
}

/// Table of the unfused (`J = 1`) model at time `t`, using `alpha(t)`.
pub fn unfused_table(params: &ModelParams, t: i64) -> Result<VertexWeightTable, WeightError> {
    build_table(params, params.alpha_at(t), 1, TableOptions::default())
}

/// Table of the fused model with the parameter's own `alpha` and `J`.
pub fn fused_table(params: &ModelParams) -> Result<VertexWeightTable, WeightError> {
    build_table(params, params.alpha, params.line_capacity, TableOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(q: f64, i: usize, j: usize, alpha: f64) -> ModelParams {
        ModelParams::new(q, i, j, alpha).unwrap()
    }

    #[test]
    fn empty_vertex_stays_empty() {
        let p = raw(2.0, 2, 3, -0.05);
        assert!((l_general(&p, p.alpha, 3, 0, 0, 0, 0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn j1_examples_outside_the_stochastic_band() {
        // q=2, I=2, alpha=-0.5
        let p = raw(2.0, 2, 1, -0.5);
        assert!(l_general(&p, -0.5, 1, 1, 0, 1, 0).unwrap().abs() < 1e-14);
        assert!((l_general(&p, -0.5, 1, 1, 0, 0, 1).unwrap() - 1.0).abs() < 1e-14);
        assert!((l_j1(&p, -0.5, 1, 1, 2, 0).unwrap() - 1.0).abs() < 1e-15);
        assert!(l_j1(&p, -0.5, 1, 1, 1, 1).unwrap().abs() < 1e-15);
        assert_eq!(l_j1(&p, -0.5, 0, 0, 0, 0).unwrap(), 1.0);
    }

    #[test]
    fn conservation_zeroes() {
        let p = raw(1.5, 3, 2, -0.05);
        assert_eq!(l_general(&p, p.alpha, 2, 1, 1, 1, 0).unwrap(), 0.0);
        assert!(l_general(&p, p.alpha, 2, 4, 0, 0, 0).is_err());
    }

    #[test]
    fn j1_table_equals_closed_forms() {
        let p = ModelParams::stochastic(1.8, 3, 1, -0.1).unwrap();
        let t = build_table(&p, p.alpha, 1, TableOptions::default()).unwrap();
        for m in 0..=3 {
            for j1 in 0..=1 {
                for i2 in 0..=3 {
                    for j2 in 0..=1 {
                        let c = l_j1(&p, p.alpha, m, j1, i2, j2).unwrap();
                        assert!((t.weight(m, j1, i2, j2) - c).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn sampler_reproduces_bernoulli_coupling() {
        let p = ModelParams::stochastic(2.0, 2, 1, -0.2).unwrap();
        let t = unfused_table(&p, 0).unwrap();
        for eta in 0..=2 {
            let (pb, pbp) = bernoulli_means(&p, p.alpha, eta);
            for k in 0..200 {
                let u = (k as f64 + 0.37) / 200.0;
                let (_, out0) = t.sample(eta, 0, u);
                assert_eq!(out0 == 1, u < pb);
                if eta < 2 || pbp > 0.0 {
                    let (_, out1) = t.sample(eta, 1, u);
                    assert_eq!(out1 == 1, u < pbp, "eta={eta} u={u} pbp={pbp} row={:?}", t.row(eta, 1));
                }
            }
        }
    }

    #[test]
    fn validation_rejects_out_of_band_alpha() {
        let p = raw(2.0, 2, 1, -0.5);
        assert!(matches!(build_table(&p, -0.5, 1, TableOptions::default()), Err(WeightError::Param(_))));
        let t = build_table(&p, -0.5, 1, TableOptions { validate: false, ..Default::default() }).unwrap();
        assert!(t.weight(2, 0, 2, 0) < 0.0);
    }

    #[test]
    fn scaled_mode_rows_sum_to_one() {
        let p = ModelParams::scaled(2, 2, 0.8, 1.0, 0.01).unwrap();
        let t = fused_table(&p).unwrap();
        assert!(t.max_row_deviation < 1e-10);
        for i1 in 0..=2 {
            for j1 in 0..=2 {
                let s: f64 = t.row(i1, j1).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn extended_matches_double() {
        let p = ModelParams::stochastic(1.4, 4, 4, -0.05).unwrap();
        let d = build_table(&p, p.alpha, 4, TableOptions::default()).unwrap();
        let e =
            build_table(&p, p.alpha, 4, TableOptions { precision: Precision::Extended, ..Default::default() }).unwrap();
        for i1 in 0..=4 {
            for j1 in 0..=4 {
                for (a, b) in d.row(i1, j1).iter().zip(e.row(i1, j1)) {
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn rows_are_probability_vectors(q in 1.05f64..4.0, i in 1usize..=6, j in 1usize..=6, frac in 0.02f64..0.98) {
            let lower = -q.powi(-((i + j - 1) as i32));
            let p = ModelParams::stochastic(q, i, j, lower * frac).unwrap();
            let t = build_table(&p, p.alpha, j, TableOptions { validate: false, precision: Precision::Extended }).unwrap();
            prop_assert!(t.max_row_deviation < 1e-10, "dev {}", t.max_row_deviation);
            for i1 in 0..=i { for j1 in 0..=j {
                for (c, &w) in t.row(i1, j1).iter().enumerate() {
                    prop_assert!(w >= -1e-12);
                    let (i2, j2) = (c / (j + 1), c % (j + 1));
                    if i1 + j1 != i2 + j2 { prop_assert_eq!(w, 0.0); }
                }
            }}
        }

        #[test]
        fn rotated_alpha_stays_stochastic(q in 1.05f64..3.0, i in 1usize..=4, j in 1usize..=4, frac in 0.02f64..0.98, t in 0i64..8) {
            let lower = -q.powi(-((i + j - 1) as i32));
            let p = ModelParams::stochastic(q, i, j, lower * frac).unwrap();
            let tab = unfused_table(&p, t).unwrap();
            prop_assert!(tab.max_row_deviation < 1e-12);
        }
    }
}
