//! Semi-implicit, asymptotic-preserving finite-volume solver for the Euler
//! equations with potential temperature transport on periodic MAC grids.
//!
//! The scheme updates mass explicitly, solves a nonlinear implicit problem for
//! the total potential temperature `rho theta` (which carries the stiff
//! pressure), and then updates the face velocities explicitly. It stays stable
//! and consistent uniformly in the Mach number `eps`.

pub mod cases;
pub mod config;
pub mod diagnostics;
pub mod discrete_ops;
pub mod error;
pub mod fields;
pub mod fluxes;
pub mod io;
pub mod limit_stepper;
pub mod linalg;
pub mod mesh;
pub mod reference;
pub mod runner;
pub mod stepper;

pub use error::{Error, Result};
