//! Finite-rank approximation operators on spaces of Lipschitz functions over
//! embedded submanifolds of `R^N`, with sampled verification of every
//! quantitative estimate used to build them.

// `!(x > 0.0)` is the NaN-rejecting form used in argument checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::too_many_arguments, clippy::type_complexity)]

pub mod assembly;
pub mod config;
pub mod counterexample;
pub mod error;
pub mod interpolation;
pub mod lipschitz;
pub mod manifold;
pub mod mollification;
pub mod normed_space;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod suites;
pub mod vecops;

pub use error::{Error, Result};
