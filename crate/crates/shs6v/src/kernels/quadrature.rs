//! Trapezoid quadrature on closed contours with node doubling.

use num_complex::Complex;
use serde::Serialize;

use super::KernelError;

pub const MIN_NODES: usize = 64;
pub const MAX_NODES: usize = 1 << 16;
/// Successive doublings must agree to this absolute tolerance.
pub const DOUBLING_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureOptions {
    pub start_nodes: usize,
    pub max_nodes: usize,
    pub tol: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { start_nodes: MIN_NODES, max_nodes: MAX_NODES, tol: DOUBLING_TOL }
    }
}

impl QuadratureOptions {
    pub fn validate(&self) -> Result<(), KernelError> {
        let ok = self.start_nodes >= MIN_NODES
            && self.start_nodes.is_power_of_two()
            && self.max_nodes >= self.start_nodes
            && self.tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(KernelError::InvalidQuery(format!("bad quadrature options {self:?}")))
        }
    }
}

/// Result of a doubling refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct Refined<V> {
    pub value: V,
    pub nodes: usize,
    /// Max-norm change over the last doubling.
    pub change: f64,
}

/// Evaluates `eval(n)` at `n = start, 2 start, ...` until two successive
/// tables agree to `tol` in max norm.
pub fn refine_by_doubling<F>(opts: &QuadratureOptions, mut eval: F) -> Result<Refined<Vec<f64>>, KernelError>
where
    F: FnMut(usize) -> Result<Vec<f64>, KernelError>,
{
    opts.validate()?;
    let mut n = opts.start_nodes;
    let mut prev = eval(n)?;
    let mut change = f64::INFINITY;
    let mut stalled = 0;
    while n < opts.max_nodes {
        n *= 2;
        let next = eval(n)?;
        let last = change;
        change = prev.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prev = next;
        if change < opts.tol {
            return Ok(Refined { value: prev, nodes: n, change });
        }
        // Geometric convergence has ended once the change stops shrinking:
        // what remains is rounding noise that more nodes cannot remove.
        stalled = if change >= 0.5 * last { stalled + 1 } else { 0 };
        if stalled >= 2 {
            break;
        }
    }
    Err(KernelError::QuadratureNotConverged { change, nodes: n })
}

/// `(1 / 2 pi i) oint f(z) dz` over the circle `|z - center| = radius`
/// with `n` trapezoid nodes.
pub fn circle_integral<F>(center: Complex<f64>, radius: f64, n: usize, f: F) -> Complex<f64>
where
    F: Fn(Complex<f64>) -> Complex<f64>,
{
    let mut acc = Complex::new(0.0, 0.0);
    for k in 0..n {
        let offset = Complex::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / n as f64);
        acc += f(center + offset) * offset;
    }
    acc / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_integral_extracts_residues() {
        let a = Complex::new(0.3, -0.2);
        let r = circle_integral(Complex::new(0.0, 0.0), 1.0, 64, |z| 1.0 / (z - a));
        assert!((r - 1.0).norm() < 1e-14);
        let r = circle_integral(Complex::new(0.0, 0.0), 1.0, 64, |z| z * z);
        assert!(r.norm() < 1e-14);
    }

    #[test]
    fn doubling_stops_on_agreement() {
        let out = refine_by_doubling(&QuadratureOptions::default(), |n| Ok(vec![1.0 + (n as f64).powi(-4)])).unwrap();
        assert!(out.change < DOUBLING_TOL);
        assert!(out.nodes.is_power_of_two() && out.nodes >= 2 * MIN_NODES);
    }

    #[test]
    fn doubling_reports_failure() {
        let opts = QuadratureOptions { max_nodes: 256, ..Default::default() };
        let err = refine_by_doubling(&opts, |n| Ok(vec![n as f64])).unwrap_err();
        assert!(matches!(err, KernelError::QuadratureNotConverged { nodes: 256, .. }));
    }

    #[test]
    fn options_validate() {
        assert!(QuadratureOptions { start_nodes: 48, ..Default::default() }.validate().is_err());
        assert!(QuadratureOptions { start_nodes: 100, ..Default::default() }.validate().is_err());
    }
}
