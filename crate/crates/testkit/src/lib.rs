//! Test support: synthetic providers, the fixture corpus and its authoring
//! routine, and an engine harness on a temporary data directory.

pub mod corpus;
pub mod fixtures;
pub mod harness;
pub mod synthetic;

pub use harness::{fast_retry, Harness};
