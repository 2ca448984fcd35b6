//! Scaling-law predictions for data curation in high-dimensional linear
//! models, with a Monte Carlo simulator to check them.

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curation;
pub mod error;
pub mod laws;
pub mod simulator;
pub mod special_fn;
pub mod spectral;

pub use error::{Error, Result};
