//! Simulation and numerical verification toolkit for Lévy-driven
//! Ornstein–Uhlenbeck processes `dX = AX dt + B dZ`.
//!
//! Total variation is measured in the total-mass convention throughout, so the
//! distance between two probability laws lies in `[0, 2]`.

pub mod coupling;
pub mod error;
pub mod estimate;
pub mod levy;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod spectral;
pub mod stats;
pub mod symbol;

pub use error::{Error, Result};
