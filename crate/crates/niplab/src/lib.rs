//! Numerical laboratory for quasi-Hermitian wrong-sign anharmonic oscillators:
//! discretized operator families, spectra, metrics and Dyson maps, and
//! non-Hermitian interaction-picture evolution.

pub mod error;
pub mod fring_tenney;
pub mod linalg;
pub mod metric;
pub mod nip;
pub mod operators;
pub mod schedule;
pub mod spectra;

pub use error::{NipError, Result};
pub use faer::c64;
