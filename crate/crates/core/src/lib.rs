//! Kriging-surrogate tuning of fractional-order PID controllers for
//! load-frequency control of an islanded microgrid.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod campaign;
pub mod error;
pub mod exec;
pub mod export;
pub mod fopid;
pub mod ga;
pub mod history;
pub mod kriging;
pub mod lti;
pub mod microgrid;
pub mod objective;
pub mod stochastic;
pub mod surrogate;

pub use error::{Error, Result};
