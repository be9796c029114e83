//! Decoherence of a two-branch pointer state coupled to a Gaussian bath with
//! memory: functional, closed-form, pseudomode and Monte Carlo backends, plus
//! diagnostics, inference and correlation-time scaling studies.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closure;
pub mod diagnostics;
pub mod error;
pub mod functional;
pub mod io;
pub mod model;
pub mod ode;
pub mod plot;
pub mod pseudomode;
pub mod quad;
pub mod scaling;
pub mod stochastic;

pub use error::{Error, Result};
