//! Fully-parametric multi-state survival modelling.
//!
//! Two frameworks for the same multi-state data are implemented and can be
//! contrasted on a common dataset:
//!
//! * **Cause-specific hazards** ([`csh`]): each permitted transition carries a
//!   parametric latent-time distribution (optionally a mixture-cure
//!   distribution); the earliest latent event determines the transition.
//!   The likelihood factorises by transition, so each transition is fitted
//!   independently.
//! * **Mixture multi-state** ([`mixture`]): the next destination is drawn at
//!   state entry from a multinomial-logit membership model, and the time to it
//!   follows a destination-conditional distribution. The joint likelihood is
//!   maximised by an EM algorithm.
//!
//! Derived quantities ([`quantities`]) — next-state probabilities, conditional
//! lengths of stay, ultimate-outcome probabilities and conditional times to
//! ultimate outcomes — are computed from either fitted model by solving the
//! Kolmogorov forward equation, by analytic composition, or by Monte Carlo
//! simulation, with interval estimates propagated from the asymptotic normal
//! distribution of the parameter estimates ([`inference`]).
//!
//! Nonparametric Kaplan–Meier and Aalen–Johansen estimators ([`nonparam`])
//! support goodness-of-fit checks of both frameworks, and [`synthdata`]
//! generates synthetic hospital-pathway datasets for end-to-end testing.

pub mod config;
pub mod csh;
pub mod dist;
pub mod error;
pub mod inference;
pub mod mixture;
pub mod model;
pub mod nonparam;
pub mod quantities;
pub mod rng;
pub mod special;
pub mod synthdata;

pub mod cli;

pub use error::{Error, Result};

/// Tool version recorded in results files.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
