//! Simulation and estimation toolkit for multi-band bistatic sensing
//! channels impaired by frequency-dependent dense multipath components (DMC).
//!
//! - [`scenario`]: scene description, path geometry and gains
//! - [`channel`]: steering vectors, DMC/noise covariance, realizations
//! - [`bounds`]: Fisher information, CRB and ESNR
//! - [`estimator`]: single-band ML path estimator
//! - [`fusion`]: alias handling, cross-band matching and weighted fusion
//! - [`experiments`]: Monte Carlo sweeps and CSV output

// Negated float comparisons deliberately treat NaN as failing the test.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod channel;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod experiments;
pub mod fusion;
pub mod scenario;

pub use error::{Error, Result};
