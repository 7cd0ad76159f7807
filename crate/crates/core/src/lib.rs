//! Rare-event probability estimation by importance sampling with
//! variance-optimal exponential tilting.
//!
//! The crate provides:
//! - the exponential-embedding abstraction ([`tilt`]): cumulant generating
//!   functions, likelihood ratios, conjugate measures and the variance
//!   functional G;
//! - the conjugate-measure fixed-point solver for the optimal tilt
//!   ([`solver`]), with large- and moderate-deviation alternatives;
//! - analytic tilting families ([`families`]) and Monte Carlo estimators with
//!   deterministic parallel streams ([`estimator`]);
//! - a delta-gamma jump-diffusion VaR engine ([`var`]);
//! - importance resampling for bootstrap tail probabilities and confidence
//!   regions in regression ([`bootstrap`]).

pub mod bootstrap;
pub mod error;
pub mod estimator;
pub mod families;
pub mod numeric;
pub mod rng;
pub mod solver;
pub mod tilt;
pub mod var;

pub use error::{Error, Result};
pub use tilt::{
    conjugate_view, likelihood_ratio, variance_functional_g, TailDirection, TailEvent,
    TiltingFamily, ThetaDomain,
};
