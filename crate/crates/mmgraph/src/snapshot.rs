//! Loaded artifacts bundled for querying.

use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use mmgraph_core::encoder::Model;
use mmgraph_core::index::{EmbeddingIndex, EmbeddingTable};
use mmgraph_core::query::{AttachIndex, QueryEngine};
use mmgraph_core::MultiModalGraph;

use crate::formats;

pub const GRAPH_FILE: &str = "graph.mmgf";
pub const WEIGHTS_FILE: &str = "weights.mmgw";
pub const EMBEDDINGS_FILE: &str = "embeddings.mmge";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactPaths {
    pub graph: PathBuf,
    pub weights: PathBuf,
    pub embeddings: PathBuf,
}

impl ArtifactPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            graph: dir.join(GRAPH_FILE),
            weights: dir.join(WEIGHTS_FILE),
            embeddings: dir.join(EMBEDDINGS_FILE),
        }
    }
}

#[derive(Debug)]
pub struct Snapshot {
    pub graph: MultiModalGraph,
    pub model: Model<f32>,
    pub table: EmbeddingTable,
    pub index: EmbeddingIndex,
    pub attach: AttachIndex,
}

impl Snapshot {
    pub fn new(graph: MultiModalGraph, model: Model<f32>, table: EmbeddingTable) -> Result<Self> {
        ensure!(
            table.len() == graph.node_count(),
            "embedding table has {} rows but the graph has {} nodes",
            table.len(),
            graph.node_count()
        );
        ensure!(
            model.params.dims().input == graph.d_in(),
            "weights expect {}-wide features, graph has {}",
            model.params.dims().input,
            graph.d_in()
        );
        ensure!(
            model.params.dims().output() == table.dim(),
            "weights produce {}-wide embeddings, table has {}",
            model.params.dims().output(),
            table.dim()
        );
        let index = EmbeddingIndex::build(&table)?;
        let attach = AttachIndex::from_graph(&graph);
        Ok(Self {
            graph,
            model,
            table,
            index,
            attach,
        })
    }

    pub fn load(paths: &ArtifactPaths) -> Result<Self> {
        let graph = formats::load_graph(&paths.graph).with_context(|| format!("loading {}", paths.graph.display()))?;
        let model =
            formats::load_model(&paths.weights).with_context(|| format!("loading {}", paths.weights.display()))?;
        let table = formats::load_embeddings(&paths.embeddings)
            .with_context(|| format!("loading {}", paths.embeddings.display()))?;
        Self::new(graph, model, table)
    }

    pub fn engine(&self) -> QueryEngine<'_> {
        QueryEngine {
            graph: &self.graph,
            model: &self.model,
            table: &self.table,
            index: &self.index,
            attach: &self.attach,
        }
    }
}
