// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assumptions;
pub mod cli;
pub mod closed_form;
pub mod error;
pub mod fmt;
pub mod limits;
pub mod ode;
pub mod policy;
pub mod sim;

pub use error::{Error, Result};
