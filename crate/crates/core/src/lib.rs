//! Pool-boiling data generation: a hybrid lattice-Boltzmann / finite-difference
//! simulator and the pipeline that turns its output (and segmented
//! experimental images) into phase-contour / temperature training data.

// `!(x > 0.0)` rejects NaN as well; the negated form is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod container;
pub mod dataset;
pub mod diagnostics;
pub mod eos;
pub mod error;
pub mod grid;
pub mod ingest;
pub mod lbm;
pub mod phase;
pub mod sim;
pub mod thermal;
pub mod units;

pub use error::{Error, Result};
pub use grid::ScalarGrid2D;
