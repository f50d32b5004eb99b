//! Rough-surface contact simulation and kernel surrogate modeling.
//!
//! The crate covers the whole offline/online workflow for predicting the
//! effective contact area of a rigid rough surface pressed into an elastic
//! half-space:
//!
//! * [`surface`]: self-affine surface synthesis by random midpoint displacement.
//! * [`stats`]: the 22 statistical descriptors used as surrogate features.
//! * [`bem`]: boundary-element influence coefficients and the contact LCP solver.
//! * [`dataset`]: database generation, cleaning, normalization and splitting.
//! * [`kernel`]: kernel ridge and Gaussian process regression, grid search with k-fold CV.
//! * [`eval`]: accuracy metrics and the surrogate cost / break-even analysis.
//!
//! Lengths are in micrometres throughout; pressures share the unit of the
//! Young's modulus passed in [`bem::Material`].

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bem;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod rng;
pub mod stats;
pub mod surface;

pub use error::{Error, Result};
