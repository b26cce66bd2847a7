//! Simulation and exact-identity verification toolkit for the stochastic
//! higher-spin six-vertex model.

pub mod duality;
pub mod dynamics;
pub mod experiments;
pub mod hopfcole;
pub mod kernels;
pub mod params;
pub mod precision;
pub mod qspecial;
pub mod rng;
pub mod stationary;
pub mod weights;

pub use params::{ModelParams, ParamError, Scaling};
