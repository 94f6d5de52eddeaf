//! Free-probability tooling for unitarily invariant matrix ensembles.
//!
//! The library covers exact non-crossing combinatorics, Cauchy/R-transform
//! evaluation on one-cut equilibrium measures, a Coulomb-gas Metropolis
//! sampler with rank-one spherical-integral estimators, the saddle-point
//! asymptotics of the rank-one characteristic function, and an S-matrix
//! correlation pipeline for resonance scattering.

// `!(x > 0.0)` style guards are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coulomb_mc;
pub mod equilibrium;
pub mod error;
pub mod hexfloat;
pub mod nc_combinatorics;
pub mod omega;
pub mod quad;
pub mod scattering;
pub mod transforms;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
