//! Carleman-weighted convexification for recovering the zeroth-order
//! coefficient of a parabolic operator from one-sided lateral Cauchy data.
//!
//! The pipeline: generate two-sided data from a closed-form oracle, take the
//! logarithmic derivative of the traces, minimize a weighted quadratic-plus-
//! regularizer cost over a ball with the boundary data pinned, and read the
//! coefficient off the `t = 0` slice of the minimizer.

pub mod config;
pub mod error;
pub mod field;
pub mod forward;
pub mod io;
pub mod functional;
pub mod geometry;
pub mod model;
pub mod optimize;
pub mod pipeline;
pub mod recover;
pub mod transform;
pub mod verify;

pub use error::{ConvexifyError, Result};
