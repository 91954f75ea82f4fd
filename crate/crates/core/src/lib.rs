#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arrow;
pub mod collapse;
pub mod error;
pub mod harness;
pub mod propagator;
pub mod qstate;
pub mod rng;
pub mod scenarios;

pub use error::{Error, Result};
