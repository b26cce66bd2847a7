//! Exact transition kernels of the reversed location process evaluated by
//! contour quadrature, their tilted versions, and steepest-descent
//! diagnostics of the limiting symbols.

pub mod oracle;
pub mod quadrature;
pub mod steepest;
pub mod symbols;
pub mod tilt;
pub mod two_particle;

pub use quadrature::QuadratureOptions;
pub use steepest::{sd_diagnostics, ContourKind, ContourSpec, LimitSymbols, SdReport};
pub use two_particle::{
    one_particle_kernel, tilted_v, two_particle_reversed, KernelQuery, KernelValue, TwoParticleKernel,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("pole within {distance:e} of a quadrature node at radius {radius}")]
    PoleOnContour { radius: f64, distance: f64 },
    #[error("quadrature did not converge: last change {change:e} with {nodes} nodes")]
    QuadratureNotConverged { change: f64, nodes: usize },
    #[error("tilt denominator vanishes at k={k}, rho={rho}")]
    DegenerateTilt { k: i64, rho: f64 },
    #[error("two-particle kernel requires max_occupancy >= 2, got {0}")]
    UnsupportedSpin(usize),
    #[error("exponent {0} is not an integer after drift compensation")]
    NonIntegralExponent(f64),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
}
