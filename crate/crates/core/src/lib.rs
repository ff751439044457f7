//! Source localization in a two-dimensional disk model: analytic forward
//! model, Gaussian inversion with standardization, standardized Kalman
//! filtering, probabilistic localization bounds, and reproducible
//! numerical experiments.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod forward;
pub mod geometry;
pub mod gmm;
pub mod inverse;
pub mod io;
pub mod kalman;
pub mod linalg;
pub mod measurement;
pub mod special;

pub use error::{Error, Result};
