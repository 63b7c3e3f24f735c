//! Multi-frequency sampling method for inverse source problems of the
//! Helmholtz equation with sparse near or far field measurements.
//!
//! The crate generates synthetic multi-frequency data for a known source,
//! applies the discrete multi-frequency operators, evaluates the imaging
//! indicator on a voxel grid and checks the numerical certificates behind it.

pub mod cli;
pub mod error;
pub mod formats;
pub mod forward;
pub mod geometry;
pub mod imaging;
pub mod operators;
pub mod scenario;
pub mod verify;

pub use error::{Error, Result};
