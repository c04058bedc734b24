#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod io;
pub mod modal;
pub mod oracle;
pub mod scenario;
pub mod stepper;

pub use error::{Error, Result};
