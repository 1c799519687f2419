//! Storage, command line and HTTP service for `mmgraph-core`.

pub mod api;
pub mod cli;
pub mod formats;
pub mod service;
pub mod snapshot;
pub mod synth;
pub mod textio;
