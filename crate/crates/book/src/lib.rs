//! Compiles and runs the guide's listings. mdbook cannot link against the
//! workspace crates, so each chapter is pulled in as a doc comment and the
//! code blocks run as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/orders.md")]
pub mod orders {}
#[doc = include_str!("../../../book/src/expansion.md")]
pub mod expansion {}
#[doc = include_str!("../../../book/src/monte-carlo.md")]
pub mod monte_carlo {}
#[doc = include_str!("../../../book/src/splitting.md")]
pub mod splitting {}
#[doc = include_str!("../../../book/src/studies.md")]
pub mod studies {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
