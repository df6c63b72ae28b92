//! Semigroup boosting: recursive high-order approximations built from a
//! low-order one-step scheme.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod estimate;
pub mod expansion;
pub mod hypothesis;
pub mod order;
pub mod random_grid;
pub mod report;
pub mod rng;
pub mod scheme;
pub mod splitting;
pub mod study;

pub use error::{Error, Result};
