//! Message-passing neural ODEs for homogeneous coupled dynamical systems.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ad;
pub mod analysis;
pub mod cli;
pub mod datasets;
pub mod dynamics;
pub mod error;
pub mod graphs;
pub mod model;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
