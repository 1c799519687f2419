//! Multi-modal graph embeddings for image retrieval.
//!
//! Images and their tags form one graph: every image links to its tags and to
//! its visually nearest images. A two-layer mean-aggregator encoder is trained
//! on random-walk co-occurrence with negative sampling, and queries are
//! answered inductively by attaching a virtual node to the frozen graph.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and the
//! HTTP service live in the `mmgraph` companion crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod index;
pub mod ingest;
pub mod matrix;
pub mod optim;
pub mod query;
pub mod real;
pub mod rng;
pub mod sampler;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{EdgeKind, GraphBuilder, MultiModalGraph, NodeId, NodeKind};
pub use real::Real;
