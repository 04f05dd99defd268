//! HTTP service and command-line front end.
//!
//! The service loads one dataset directory, computes (or reuses) its t-SNE
//! layout in the background and exposes statistics, persona chat sessions and
//! notes as JSON. Every error response is an [`ApiError`].

pub mod app;
pub mod cli;
mod error;
pub mod projection;
mod routes;

pub use app::{build, serve, AppState, ServerConfig, STATE_DIR};
pub use error::{ApiError, ErrorCode};
pub use projection::{Point, ProjectionFile, PROJECTION_CACHE_FILE};
