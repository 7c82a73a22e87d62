//! Numerical toolkit for unimodal interval maps: transfer operators,
//! dynamical quantities, kneading combinatorics and CLT experiments for the
//! linear response of the invariant density.

// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clt;
pub mod error;
pub mod expectations;
pub mod maps;
pub mod quantities;
pub mod report;
pub mod stats;
pub mod symbolic;
pub mod transfer;
pub mod wild;

pub use error::{Error, ErrorClass, Result};
pub use maps::{MapFamily, Side, UnimodalMap};
