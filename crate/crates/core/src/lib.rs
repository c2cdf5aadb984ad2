//! Numerical laboratory for cutoff-localized Ricci flow on coordinate charts.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod config;
pub mod curvature;
pub mod cutoff;
pub mod error;
pub mod field;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod scenario;
pub mod sobolev;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use field::{MetricField, ScalarField, TensorField};
pub use grid::{Boundary, ChartGrid};
