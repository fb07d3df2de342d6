//! Joint transmit-power and IRS phase-shift optimization for uplink NOMA.
//!
//! Modules, from channel model to experiment driver:
//!
//! * [`scenario`]: configuration, Rician channel generation, SIC ordering.
//! * [`ccm`]: geometry of the complex circle manifold and a Riemannian
//!   line-search solver.
//! * [`penalty`]: exact penalty with smoothing for the constrained phase
//!   problems (max-min constraint slack and weighted received power).
//! * [`noma_power`]: sum-power minimization by alternating optimization.
//! * [`sdr`]: semidefinite relaxation baseline (lifting, a dense
//!   interior-point SDP solver, Hermitian eigensolver, rank-one extraction).
//! * [`ee`]: energy-efficiency maximization (Dinkelbach + coordinate ascent).
//! * [`oma`]: optimized time-sharing OMA baselines.
//! * [`harness`]: Monte-Carlo experiment driver, presets, CSV output.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ccm;
pub mod ee;
pub mod error;
pub mod harness;
pub mod noma_power;
pub mod oma;
pub mod penalty;
pub mod scenario;
pub mod sdr;
pub mod trace;

pub use error::{Error, Result};

/// Complex scalar used throughout the crate.
pub type C64 = num_complex::Complex<f64>;

/// `2^r - 1`, the SINR needed for a rate of `r` bits/s/Hz.
#[inline]
pub fn sinr_target(rate: f64) -> f64 {
    rate.exp2() - 1.0
}
