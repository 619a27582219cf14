//! Controller synthesis with prescribed local behavior.
// `!(x > 0.0)` is used on purpose: it rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clf;
pub mod error;
pub mod inverse_opt;
pub mod linear;
pub mod matrix_json;
pub mod numeric;
pub mod orbital;
pub mod registry;
pub mod sim;
pub mod structured;
pub mod synthesis;

pub use error::{Error, ErrorClass, Result};
