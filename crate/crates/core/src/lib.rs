//! Delay-robust stochastic convex optimization.
//!
//! The crate provides compact convex domains with exact projections, noisy
//! first-order oracles for quadratic and multinomial logistic objectives, a
//! deterministic simulator of stale gradient delivery, online learners (OGD
//! and adaptive optimistic OGD), the anytime online-to-batch drivers built on
//! them, optimistic strongly convex OGD, and an experiment harness.

pub mod anytime;
pub mod baseline;
pub mod delay;
pub mod domain;
pub mod error;
pub mod harness;
pub mod oco;
pub mod oracle;
pub mod rng;
pub mod strongly_convex;
pub mod trace;

pub use domain::{DomainSpec, Vector};
pub use error::{Error, Result};
