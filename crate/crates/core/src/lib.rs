// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod mimo;
pub mod obstacle;
pub mod sampler;
pub mod svg;
pub mod target;

pub use error::{Error, Result};
