//! Finite-size key lengths for decoy-state BB84 when the detectors' efficiencies
//! and dark-count rates are only known up to a tolerance.
//!
//! Bottom-up:
//! - [`stat_bounds`]: binomial tails, Serfling and Hoeffding deviations
//! - [`detector_model`]: threshold-detector POVMs and the mismatch metrics δ₁, δ₂
//! - [`decoy`]: three-intensity vacuum/single-photon bounds
//! - [`phase_error`]: phase-error-rate bounds
//! - [`keyrate`]: key lengths and ε accounting
//! - [`channel_sim`]: honest lossy channel statistics
//! - [`mc_verify`]: Monte Carlo checks of the concentration inequalities

// `!(x > 0.0)` is used on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channel_sim;
pub mod decoy;
pub mod detector_model;
pub mod keyrate;
pub mod mc_verify;
pub mod phase_error;
pub mod stat_bounds;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_prob(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {x} is not in [0, 1]")))
    }
}

pub(crate) fn check_eps_sq(eps_sq: f64) -> Result<()> {
    if eps_sq > 0.0 && eps_sq < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("eps_sq = {eps_sq} is not in (0, 1)")))
    }
}
