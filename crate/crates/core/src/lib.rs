// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod deident;
pub mod embednet;
pub mod error;
pub mod evalharness;
pub mod gennet;
pub mod geom;
pub mod imgcore;
pub mod nn;
pub mod synthface;
pub mod workflow;

pub use error::{Error, Result};
