//! Dynamic power system state estimation: a moving-horizon estimator whose
//! window problem is solved as a semidefinite relaxation, an extended Kalman
//! filter baseline, and a Monte Carlo harness comparing the two.

pub mod csv;
pub mod dynamics;
pub mod ekf;
pub mod error;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod mhe;
pub mod sdr;

pub use error::{Error, Result};
