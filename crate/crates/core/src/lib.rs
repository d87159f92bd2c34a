//! Simulation of noise-induced transport of transverse vibrational
//! excitations in inhomogeneous trapped-ion chains.
//!
//! The crate is organised bottom-up:
//!
//! * [`chain`] builds the chain geometry, local transverse frequencies and
//!   the Coulomb hopping matrix.
//! * [`noise`] samples the piecewise-constant optical frequency shifts used
//!   as engineered dephasing.
//! * [`propagators`] evolves single-excitation wavefunctions and Gaussian
//!   states (with a thermal bath) and averages over noise realisations.
//! * [`fock`] is a truncated Fock-space master-equation integrator used as a
//!   reference for the Gaussian engine.
//! * [`laser`] evaluates the Raman-scheme frequency shift and its validity
//!   conditions.
//! * [`readout`] models the displacement-based first-moment measurement and
//!   the thermally filtered transport signal.
//! * [`analysis`] fits equilibration rates and computes noise statistics.
//! * [`config`], [`output`] and [`runner`] drive the command-line tool.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Index loops read
// closer to the formulas than iterator chains in the numerical kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod chain;
pub mod config;
pub mod constants;
pub mod error;
pub mod fock;
pub mod laser;
pub mod noise;
pub mod output;
pub mod propagators;
pub mod readout;
pub mod runner;
pub mod validation;

pub use error::{Error, Result};
