//! Pipeline CLI, run-directory formats and read-only HTTP API built on `tracevis-core`.

pub mod bundle_io;
pub mod config;
pub mod error;
pub mod idx;
pub mod pipeline;
pub mod server;
pub mod store;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use pipeline::{Pipeline, RunLayout, Stage};
