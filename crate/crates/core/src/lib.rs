//! Forward optics and data plumbing for inverse thin-film design.
//!
//! The crate covers the physics side of the toolkit: dispersion tables and
//! their interpolation onto the simulation grid, a normal-incidence transfer
//! matrix simulator with an incoherent substrate, the training-set sampler and
//! its line-oriented file format, and the spectral metrics used everywhere.
//! Inverse design methods plug in through [`designer::InverseDesigner`].

pub mod dataset;
pub mod designer;
pub mod error;
pub mod materials;
pub mod metrics;
pub mod rng;
pub mod spline;
pub mod tmm;

pub use error::{Error, Result};
pub use materials::{DispersionTable, MaterialDb, WavelengthGrid};
pub use tmm::{Design, Simulator, Spectrum};
