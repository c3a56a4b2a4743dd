//! Transports along paths, displacement vectors and deviation equations on
//! charts with an arbitrary linear connection.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod deviation;
pub mod displacement;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod ode;
pub mod oracles;
pub mod paths;
pub mod tensor;
pub mod transport;

pub use error::{Error, Result};
