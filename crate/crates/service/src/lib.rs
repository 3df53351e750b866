//! Service shell around the litscout engine: JSON API, static client
//! hosting, the scheduler heartbeat and the command line.

pub mod api;
pub mod cli;
pub mod scheduler;
pub mod server;

pub use api::{router, ApiError, AppState, API_BASE};
pub use server::BackgroundServer;
