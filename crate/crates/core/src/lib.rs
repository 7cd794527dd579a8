//! Spectral laboratory for the incompressible Navier-Stokes equations on the
//! periodic torus: pseudo-spectral time integration, dissipation-based
//! diagnostics, canonical-rescaling measurements, maximal/fractional operator
//! toolbox, and Lagrangian flow frames.
//!
//! All fields live on a uniform periodic grid (power-of-two points per axis)
//! and carry an exact spectral dual. Operators are Fourier multipliers or
//! discrete convolutions; quadratic terms are dealiased with the 2/3 rule.

pub mod error;
pub mod fft;
pub mod field;
pub mod frame;
pub mod io;
pub mod norms;
pub mod ops;
pub mod quad;
pub mod scaling;
pub mod solver;
pub mod spectrum;

pub use error::Error;
pub use field::{Grid, MultiIndex, ScalarField, VectorField};
pub use solver::{SolverConfig, Trajectory};

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
