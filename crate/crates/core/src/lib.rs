//! Core of a service that watches a research document and proposes
//! related literature: paper catalog, project-state analysis, question
//! selection, deep-research answers turned into ranked, anchored suggestions,
//! and scheduled update runs.

pub mod analysis;
pub mod anchoring;
pub mod catalog;
pub mod citations;
pub mod clock;
pub mod config;
pub mod document;
pub mod engine;
pub mod error;
pub mod gateway;
pub mod hashing;
pub(crate) mod http;
pub mod notify;
pub mod parallel;
pub mod project;
pub mod store;
pub mod suggestions;
pub mod tracking;

pub use clock::{Clock, ManualClock, SystemClock};
pub use config::Config;
pub use engine::{Engine, EngineSettings, NewProject};
pub use error::{Error, Result};
pub use gateway::Gateway;
pub use parallel::Parallelism;
pub use store::DataLayout;
