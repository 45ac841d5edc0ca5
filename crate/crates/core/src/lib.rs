//! Numerical laboratory for posterior contraction in linear Gaussian inverse
//! problems written in spectral coordinates.

// `!(x > 0.0)` rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assumptions;
pub mod error;
pub mod linalg;
pub mod posterior;
pub mod rates;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{LabError, Result};
