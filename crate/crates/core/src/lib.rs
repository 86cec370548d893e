//! Simulation of spin-noise spectroscopy on a spin-1 ground state probed on a
//! J=1 → J=0 line.
//!
//! The crate integrates a density-matrix equation driven by transit noise,
//! turns optical coherences into balanced-detection signals for rotation
//! (RND) and ellipticity (END) noise, and estimates their power spectra.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod detection;
pub mod error;
pub mod integrator;
pub mod noise;
pub mod scan;
pub mod spectral;
pub mod spin;

pub use error::{Error, Result};
