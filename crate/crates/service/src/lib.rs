//! HTTP front end for running pairwise studies: study creation, blinded
//! session pages, crash-safe vote logging and live reports.

pub mod api;
pub mod config;
pub mod error;
pub mod store;

pub use api::{router, AppState};
pub use config::{Args, ServiceConfig};
