//! The chapters under `book/src`, included here so `cargo test` runs every
//! snippet in them.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/network.md")]
pub mod network {}

#[doc = include_str!("../../../book/src/cycles.md")]
pub mod cycles {}

#[doc = include_str!("../../../book/src/operations.md")]
pub mod operations {}

#[doc = include_str!("../../../book/src/bundle.md")]
pub mod bundle {}

#[doc = include_str!("../../../book/src/correction.md")]
pub mod correction {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
