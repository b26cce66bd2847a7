//! Steepest-descent diagnostics of the limiting symbols in the weakly
//! asymmetric regime, and the contours they are checked on.
//!
//! With `I`, `J` and the stay probability `b` fixed, the per-period symbol
//! tends to `D*(z) = z^{J/I} ((bJ-(J-1)) z - ((I+J)b-(I+J-1))) / (z - (Ib-(I-1)))`,
//! the inverse pole map to `p*(z) = ((I+1)z - 1) / (z + I - 1)` and the
//! pole map to `s*(z) = ((I-1)z + 1) / (I + 1 - z)`.

use num_complex::Complex;
use serde::Serialize;

use super::quadrature::MIN_NODES;
use super::KernelError;

/// Bisection steps for implicit radii.
const BISECTION_STEPS: usize = 200;

/// Limit parameters `(I, J, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitSymbols {
    pub max_occupancy: usize,
    pub line_capacity: usize,
    pub stay_probability: f64,
}

impl LimitSymbols {
    pub fn new(max_occupancy: usize, line_capacity: usize, stay_probability: f64) -> Result<Self, KernelError> {
        let i = max_occupancy as f64;
        let j = line_capacity as f64;
        let b = stay_probability;
        let ok = max_occupancy >= 1 && line_capacity >= 1 && b < 1.0 && (i + j) * b - (i + j - 2.0) > 0.0;
        if !ok {
            return Err(KernelError::InvalidQuery(format!("no positive limit variance at I={i}, J={j}, b={b}")));
        }
        Ok(Self { max_occupancy, line_capacity, stay_probability })
    }

    fn ijb(&self) -> (f64, f64, f64) {
        (self.max_occupancy as f64, self.line_capacity as f64, self.stay_probability)
    }

    /// `V* = ((I+J)b - (I+J-2)) / (I^2 (1-b))`.
    pub fn v_star(&self) -> f64 {
        let (i, j, b) = self.ijb();
        ((i + j) * b - (i + j - 2.0)) / (i * i * (1.0 - b))
    }

    fn rational(&self, z: Complex<f64>) -> Complex<f64> {
        let (i, j, b) = self.ijb();
        (z * (b * j - (j - 1.0)) - ((i + j) * b - (i + j - 1.0))) / (z - (i * b - (i - 1.0)))
    }

    /// `D*(z)` on the principal branch of `z^{J/I}`.
    pub fn d_star(&self, z: Complex<f64>) -> Complex<f64> {
        let (i, j, _) = self.ijb();
        z.powf(j / i) * self.rational(z)
    }

    /// `|D*(z)|`, free of branch choices.
    pub fn d_star_modulus(&self, z: Complex<f64>) -> f64 {
        let (i, j, _) = self.ijb();
        z.norm().powf(j / i) * self.rational(z).norm()
    }

    /// `|H*(z)| = |D*(z)| |D*(p*(z))|`.
    pub fn h_star_modulus(&self, z: Complex<f64>) -> f64 {
        self.d_star_modulus(z) * self.d_star_modulus(self.p_star(z))
    }

    pub fn p_star(&self, z: Complex<f64>) -> Complex<f64> {
        let i = self.max_occupancy as f64;
        (z * (i + 1.0) - 1.0) / (z + (i - 1.0))
    }

    pub fn s_star(&self, z: Complex<f64>) -> Complex<f64> {
        let i = self.max_occupancy as f64;
        (z * (i - 1.0) + 1.0) / ((i + 1.0) - z)
    }

    /// Closed form of `|D*(e^{i theta})|^2`.
    pub fn unit_circle_formula(&self, theta: f64) -> f64 {
        let (i, j, b) = self.ijb();
        let c = theta.cos();
        let g = i * b - (i - 1.0);
        1.0 - 2.0 * j * (1.0 - b) * (1.0 - c) * ((i + j) * b - (i + j - 2.0)) / (1.0 + g * g - 2.0 * g * c)
    }
}

/// Center `1/(I+1)` of the steepest-descent circle.
pub fn steepest_center(max_occupancy: usize) -> f64 {
    1.0 / (max_occupancy as f64 + 1.0)
}

/// Radius `I/(I+1)` of the steepest-descent circle.
pub fn steepest_radius(max_occupancy: usize) -> f64 {
    max_occupancy as f64 / (max_occupancy as f64 + 1.0)
}

/// Enlargement `u*` of the clipped contour, inside `(0, 1/(4I))`.
pub fn u_star(max_occupancy: usize) -> f64 {
    1.0 / (8.0 * max_occupancy as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ContourKind {
    /// `|z| = radius`.
    Circle { radius: f64 },
    /// `|z - 1/(I+1)| = radius`.
    ShiftedCircle { radius: f64 },
    /// Boundary of the disk `|z - 1/(I+1)| <= I/(I+1) + u` clipped to `|z| <= 1`.
    ClippedShifted { u: f64 },
    /// `|z p*(z)| = level`, parametrized around `1/(I+1)`.
    ImplicitProduct { level: f64 },
}

/// A closed counterclockwise contour with its node count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContourSpec {
    pub kind: ContourKind,
    pub nodes: usize,
}

/// A contour point with the angle that parametrizes it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourPoint {
    pub theta: f64,
    pub z: Complex<f64>,
}

impl ContourSpec {
    pub fn new(kind: ContourKind, nodes: usize) -> Result<Self, KernelError> {
        if nodes < MIN_NODES || !nodes.is_power_of_two() {
            return Err(KernelError::InvalidQuery(format!("nodes must be a power of two >= {MIN_NODES}, got {nodes}")));
        }
        Ok(Self { kind, nodes })
    }

    /// Steepest-descent circle `M`.
    pub fn steepest(max_occupancy: usize, nodes: usize) -> Result<Self, KernelError> {
        Self::new(ContourKind::ShiftedCircle { radius: steepest_radius(max_occupancy) }, nodes)
    }

    /// Angles `theta_k = -pi + 2 pi k / n`.
    fn angles(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.nodes as f64;
        (0..self.nodes).map(move |k| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * k as f64 / n)
    }

    /// Contour points; `theta` is measured around the circle center for the
    /// shifted kinds and around the origin for the clipped kind.
    pub fn points(&self, max_occupancy: usize) -> Vec<ContourPoint> {
        let c = steepest_center(max_occupancy);
        self.angles()
            .map(|theta| {
                let e = Complex::from_polar(1.0, theta);
                let z = match self.kind {
                    ContourKind::Circle { radius } => e * radius,
                    ContourKind::ShiftedCircle { radius } => e * radius + c,
                    ContourKind::ClippedShifted { u } => {
                        let r = steepest_radius(max_occupancy) + u;
                        let reach = c * theta.cos() + (c * c * theta.cos().powi(2) - c * c + r * r).sqrt();
                        e * reach.min(1.0)
                    }
                    ContourKind::ImplicitProduct { level } => e * implicit_radius(max_occupancy, level, theta) + c,
                };
                ContourPoint { theta, z }
            })
            .collect()
    }
}

/// Radius `r(theta)` with `|z p*(z)| = level` at `z = 1/(I+1) + r e^{i theta}`,
/// by bisection; the product vanishes at `r = 0` and grows without bound.
pub fn implicit_radius(max_occupancy: usize, level: f64, theta: f64) -> f64 {
    let sym = LimitSymbols { max_occupancy, line_capacity: 1, stay_probability: 0.5 };
    let c = steepest_center(max_occupancy);
    let e = Complex::from_polar(1.0, theta);
    let f = |r: f64| {
        let z = e * r + c;
        (z * sym.p_star(z)).norm() - level
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `(I+1)^4 r^4 + 2(I+1)^3 r^3 cos theta - 2 I^2 (I+1) r cos theta - I^4`.
pub fn limit_quartic(max_occupancy: usize, theta: f64, r: f64) -> f64 {
    let i = max_occupancy as f64;
    let k = i + 1.0;
    let c = theta.cos();
    k.powi(4) * r.powi(4) + 2.0 * k.powi(3) * r.powi(3) * c - 2.0 * i * i * k * r * c - i.powi(4)
}

/// Positive root of [`limit_quartic`] by bisection on `(0, 2)`.
pub fn quartic_positive_root(max_occupancy: usize, theta: f64) -> f64 {
    let f = |r: f64| limit_quartic(max_occupancy, theta, r);
    let (mut lo, mut hi) = (0.0, 2.0);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdReport {
    pub contour: ContourSpec,
    pub excluded_below: f64,
    pub evaluated: usize,
    pub max_d: f64,
    pub max_h: f64,
    /// `max | |z p*(z)| - 1 |` over the grid.
    pub product_identity_gap: f64,
    /// `max |r(theta) - I/(I+1)|` of the quartic's positive root, for the
    /// implicit contour.
    pub quartic_root_gap: Option<f64>,
    /// `max |P(theta, r(theta))|` at the implicit radius, level one.
    pub quartic_residual: Option<f64>,
}

impl SdReport {
    /// Strict descent away from the excluded neighborhood of `z = 1`.
    pub fn descends(&self) -> bool {
        self.max_d < 1.0 && self.max_h < 1.0
    }
}

/// Maxima of `|D*|` and `|H*|` on the contour, skipping angles with
/// `|theta| < excluded_below` (the saddle at `z = 1`).
pub fn sd_diagnostics(limit: &LimitSymbols, contour: &ContourSpec, excluded_below: f64) -> SdReport {
    let i = limit.max_occupancy;
    let pts: Vec<ContourPoint> = contour.points(i).into_iter().filter(|p| p.theta.abs() >= excluded_below).collect();
    let max_d = pts.iter().map(|p| limit.d_star_modulus(p.z)).fold(0.0, f64::max);
    let max_h = pts.iter().map(|p| limit.h_star_modulus(p.z)).fold(0.0, f64::max);
    let product_identity_gap = pts.iter().map(|p| ((p.z * limit.p_star(p.z)).norm() - 1.0).abs()).fold(0.0, f64::max);
    let (quartic_root_gap, quartic_residual) = match contour.kind {
        ContourKind::ImplicitProduct { .. } => {
            let target = steepest_radius(i);
            let root = pts.iter().map(|p| (quartic_positive_root(i, p.theta) - target).abs()).fold(0.0, f64::max);
            let c = steepest_center(i);
            let resid = pts.iter().map(|p| limit_quartic(i, p.theta, (p.z - c).norm()).abs()).fold(0.0, f64::max);
            (Some(root), Some(resid))
        }
        _ => (None, None),
    };
    SdReport {
        contour: *contour,
        excluded_below,
        evaluated: pts.len(),
        max_d,
        max_h,
        product_identity_gap,
        quartic_root_gap,
        quartic_residual,
    }
}

/// `max_theta | |D*(e^{i theta})|^2 - closed form |` on `n` angles.
pub fn unit_circle_formula_gap(limit: &LimitSymbols, n: usize) -> f64 {
    (0..n)
        .map(|k| {
            let theta = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let z = Complex::from_polar(1.0, theta);
            (limit.d_star_modulus(z).powi(2) - limit.unit_circle_formula(theta)).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    const POINTS: [(usize, usize, f64); 3] = [(2, 1, 0.8), (2, 2, 0.85), (3, 2, 0.9)];
    const GRID: usize = 16384;

    #[test]
    fn product_identity_on_steepest_circle() {
        for (i, j, b) in POINTS {
            let lim = LimitSymbols::new(i, j, b).unwrap();
            let rep = sd_diagnostics(&lim, &ContourSpec::steepest(i, GRID).unwrap(), 1e-2);
            assert!(rep.product_identity_gap < 1e-12, "{rep:?}");
            assert!(rep.descends(), "{rep:?}");
        }
    }

    #[test]
    fn clipped_contour_descends() {
        for (i, j, b) in POINTS {
            let lim = LimitSymbols::new(i, j, b).unwrap();
            let spec = ContourSpec::new(ContourKind::ClippedShifted { u: u_star(i) }, GRID).unwrap();
            let rep = sd_diagnostics(&lim, &spec, 1e-2);
            assert!(rep.descends(), "{rep:?}");
            for p in spec.points(i) {
                assert!(p.z.norm() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn unit_circle_closed_form() {
        for (i, j, b) in POINTS {
            let lim = LimitSymbols::new(i, j, b).unwrap();
            assert!(unit_circle_formula_gap(&lim, 10_000) < 1e-12);
            let rep = sd_diagnostics(&lim, &ContourSpec::new(ContourKind::Circle { radius: 1.0 }, GRID).unwrap(), 1e-2);
            assert!(rep.max_d < 1.0);
        }
    }

    #[test]
    fn quartic_root_is_steepest_radius() {
        // At I = 1 and theta = pi the root is triple, so bisection only
        // resolves it to the cube root of machine precision.
        for i in 2..=4 {
            let spec = ContourSpec::new(ContourKind::ImplicitProduct { level: 1.0 }, 1024).unwrap();
            let lim = LimitSymbols::new(i, 1, 0.9).unwrap();
            let rep = sd_diagnostics(&lim, &spec, 0.0);
            assert!(rep.quartic_root_gap.unwrap() < 1e-12, "{i} {rep:?}");
            assert!(rep.quartic_residual.unwrap() < 1e-10);
            for p in spec.points(i) {
                assert!(((p.z - steepest_center(i)).norm() - steepest_radius(i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn implicit_radius_moves_with_level() {
        let inner = implicit_radius(2, 0.9, 0.7);
        let outer = implicit_radius(2, 1.1, 0.7);
        assert!(inner < steepest_radius(2) && steepest_radius(2) < outer);
    }

    #[test]
    fn limit_maps_are_inverse() {
        let lim = LimitSymbols::new(3, 2, 0.9).unwrap();
        for z in [Complex::new(0.3, 0.2), Complex::new(-0.5, 0.9), Complex::new(2.0, -1.0)] {
            assert!((lim.p_star(lim.s_star(z)) - z).norm() < 1e-12);
        }
    }

    #[test]
    fn symbol_curvature_at_one() {
        for (i, j, b) in POINTS {
            let lim = LimitSymbols::new(i, j, b).unwrap();
            let one = Complex::new(1.0, 0.0);
            assert!((lim.d_star(one) - 1.0).norm() < 1e-14);
            let h = 1e-4;
            let dh = Complex::new(h, 0.0);
            let second = (lim.d_star(one + dh) - lim.d_star(one) * 2.0 + lim.d_star(one - dh)) / (h * h);
            let first = (lim.d_star(one + dh) - lim.d_star(one - dh)) / (2.0 * h);
            assert!(first.norm() < 1e-6, "{first}");
            assert!((second.re - j as f64 * lim.v_star()).abs() < 1e-5, "{second} {}", lim.v_star());
        }
    }

    #[test]
    fn contour_nodes_validated() {
        assert!(ContourSpec::new(ContourKind::Circle { radius: 1.0 }, 100).is_err());
        assert!(ContourSpec::new(ContourKind::Circle { radius: 1.0 }, 32).is_err());
    }
}
