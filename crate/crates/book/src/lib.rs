//! Code listings from the guide, compiled and run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/search-space.md")]
pub mod search_space {}

#[doc = include_str!("../../../book/src/feedback.md")]
pub mod feedback {}

#[doc = include_str!("../../../book/src/federated-loop.md")]
pub mod federated_loop {}

#[doc = include_str!("../../../book/src/partitioning.md")]
pub mod partitioning {}

#[doc = include_str!("../../../book/src/scheduling.md")]
pub mod scheduling {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
