// `!(x > 0.0)` style checks are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod db;
pub mod elicitation;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod mixture;
pub mod model_file;
pub mod projection;
pub mod search;
pub mod synth;

pub use error::{Error, Result};
