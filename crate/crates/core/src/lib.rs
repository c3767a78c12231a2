//! Finite-width statistics of deep tanh networks with Haar-orthogonal weights.
//!
//! Three independent routes to the same quantities are provided:
//! layer-wise recursions ([`recursion`]), large-depth series ([`asymptotics`])
//! and Monte-Carlo ensembles ([`montecarlo`]). The orthogonal Weingarten
//! combinatorics they rest on live in [`weingarten`].

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod gauss_expect;
pub mod montecarlo;
pub mod presets;
pub mod recursion;
pub mod weingarten;

pub use error::{Error, Result};
