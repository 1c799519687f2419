//! Inductive query answering.
//!
//! A query becomes a virtual node that points into the frozen graph (to its
//! visually closest images, to its tags, or both) without being inserted.
//! Its embedding comes from the trained encoder run over that view. Image
//! retrieval blends the query-image embedding `E_i` with the mean trained
//! embedding of the query tags `E_t`:
//!
//! ```text
//! E = (w_visual * E_i + w_concept * E_t) / 2,   w_visual + w_concept = 1
//! ```

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::encoder::Model;
use crate::error::{Error, Result};
use crate::graph::{FeatureSource, MultiModalGraph, NeighborSource, NodeId, NodeKind};
use crate::index::{EmbeddingIndex, EmbeddingTable, Hit};
use crate::ingest::{normalize_tag, resolve_tag};
use crate::real::cosine_f64;
use crate::trainer::embed_nodes;

pub const DEFAULT_ATTACH_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    ImageOnly { k: usize },
    TagOnly,
    Both { k: usize },
}

impl Default for Connectivity {
    fn default() -> Self {
        Connectivity::ImageOnly { k: DEFAULT_ATTACH_K }
    }
}

/// Visual/conceptual blend weights. Only the visual weight is stored; the
/// conceptual weight is always its complement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendWeights {
    w_visual: f32,
}

impl BlendWeights {
    pub fn new(w_visual: f32) -> Result<Self> {
        if !(0.0..=1.0).contains(&w_visual) {
            return Err(Error::WeightOutOfRange(w_visual));
        }
        Ok(Self { w_visual })
    }

    pub fn visual() -> Self {
        Self { w_visual: 1.0 }
    }

    pub fn conceptual() -> Self {
        Self { w_visual: 0.0 }
    }

    pub fn w_visual(&self) -> f32 {
        self.w_visual
    }

    pub fn w_concept(&self) -> f32 {
        1.0 - self.w_visual
    }
}

impl Default for BlendWeights {
    fn default() -> Self {
        Self::visual()
    }
}

/// `(w_visual * e_image + w_concept * e_concept) / 2`, not renormalized.
pub fn blend(e_image: &[f32], e_concept: &[f32], w: BlendWeights) -> Result<Vec<f32>> {
    if e_image.len() != e_concept.len() {
        return Err(Error::DimensionMismatch {
            expected: e_image.len(),
            actual: e_concept.len(),
        });
    }
    if e_image.iter().chain(e_concept).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let (w1, w2) = (w.w_visual(), w.w_concept());
    Ok(e_image
        .iter()
        .zip(e_concept)
        .map(|(&i, &t)| (w1 * i + w2 * t) / 2.0)
        .collect())
}

/// Mean trained embedding of the given tag nodes.
pub fn concept_embedding(tags: &[NodeId], table: &EmbeddingTable) -> Result<Vec<f32>> {
    if tags.is_empty() {
        return Err(Error::NoResolvableTags);
    }
    let mut acc = vec![0.0f64; table.dim()];
    for &t in tags {
        let row = table.get(t).ok_or(Error::UnknownNode(t.0))?;
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v as f64;
        }
    }
    let n = tags.len() as f64;
    Ok(acc.into_iter().map(|a| (a / n) as f32).collect())
}

/// Corpus vectors used to attach query images to their closest images.
#[derive(Debug, Clone, PartialEq)]
pub struct AttachIndex {
    dim: usize,
    ids: Vec<NodeId>,
    rows: Vec<f32>,
}

impl AttachIndex {
    /// Use every image's initial feature as its similarity vector.
    pub fn from_graph(g: &MultiModalGraph) -> Self {
        let mut idx = Self {
            dim: g.d_in(),
            ids: Vec::new(),
            rows: Vec::new(),
        };
        for v in g.node_ids() {
            if g.kinds()[v.index()] == NodeKind::Image {
                idx.ids.push(v);
                idx.rows.extend_from_slice(g.feature_of(v));
            }
        }
        idx
    }

    /// Explicit similarity vectors; images missing from `vectors` fall back to
    /// their initial feature only if `dim` matches the graph's input width.
    pub fn with_vectors(g: &MultiModalGraph, vectors: &[(NodeId, Vec<f32>)]) -> Result<Self> {
        let dim = vectors.first().map_or(g.d_in(), |v| v.1.len());
        let mut lookup: Vec<Option<&[f32]>> = vec![None; g.node_count()];
        for (id, v) in vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            if g.kind(*id)? != NodeKind::Image {
                return Err(Error::KindMismatch(id.0, id.0));
            }
            lookup[id.index()] = Some(v);
        }
        let mut idx = Self {
            dim,
            ids: Vec::new(),
            rows: Vec::new(),
        };
        for v in g.node_ids() {
            if g.kinds()[v.index()] != NodeKind::Image {
                continue;
            }
            let row = match lookup[v.index()] {
                Some(r) => r,
                None if dim == g.d_in() => g.feature_of(v),
                None => {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        actual: g.d_in(),
                    })
                }
            };
            idx.ids.push(v);
            idx.rows.extend_from_slice(row);
        }
        Ok(idx)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, id: NodeId) -> Option<&[f32]> {
        let i = self.ids.binary_search(&id).ok()?;
        Some(&self.rows[i * self.dim..(i + 1) * self.dim])
    }

    /// The `k` images most cosine-similar to `query`, ties by ascending id.
    pub fn nearest(&self, query: &[f32], k: usize) -> Result<Vec<NodeId>> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        let mut scored: Vec<(f64, NodeId)> = self
            .ids
            .iter()
            .enumerate()
            .filter_map(|(i, &id)| cosine_f64(query, &self.rows[i * self.dim..(i + 1) * self.dim]).map(|c| (c, id)))
            .collect();
        if scored.is_empty() && !self.ids.is_empty() && query.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroQuery);
        }
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
        Ok(scored.into_iter().take(k).map(|s| s.1).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuerySpec {
    pub init_feature: Option<Vec<f32>>,
    /// Defaults to `init_feature`.
    pub sim_feature: Option<Vec<f32>>,
    pub tags: Vec<String>,
    pub connectivity: Connectivity,
    pub blend: BlendWeights,
    pub k_results: usize,
    /// Set when the query image is itself a corpus image.
    pub source: Option<NodeId>,
    /// Leave the source image out of the results.
    pub exclude_attached: bool,
}

impl QuerySpec {
    pub fn new() -> Self {
        Self {
            k_results: 5,
            exclude_attached: true,
            ..Self::default()
        }
    }

    /// Query by an image already in the graph, using its stored features.
    pub fn for_corpus_image(g: &MultiModalGraph, attach: &AttachIndex, id: NodeId) -> Result<Self> {
        if g.kind(id)? != NodeKind::Image {
            return Err(Error::KindMismatch(id.0, id.0));
        }
        Ok(Self {
            init_feature: Some(g.feature(id)?.to_vec()),
            sim_feature: attach.vector(id).map(<[f32]>::to_vec),
            source: Some(id),
            ..Self::new()
        })
    }

    pub fn with_tags(mut self, tags: &[&str]) -> Self {
        self.tags = tags.iter().map(|t| t.to_string()).collect();
        self
    }

    pub fn with_feature(mut self, feature: Vec<f32>) -> Self {
        self.init_feature = Some(feature);
        self
    }
}

/// Tags split into those found in the graph and those dropped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResolvedTags {
    pub ids: Vec<NodeId>,
    pub dropped: Vec<String>,
}

pub fn resolve_tags(g: &MultiModalGraph, tags: &[String]) -> ResolvedTags {
    let mut out = ResolvedTags::default();
    for raw in tags {
        match resolve_tag(g, raw) {
            Some(id) if !out.ids.contains(&id) => out.ids.push(id),
            Some(_) => {}
            None => out.dropped.push(normalize_tag(raw).unwrap_or_else(|_| raw.clone())),
        }
    }
    out
}

/// The graph seen from a virtual query node. The virtual node gets id
/// `graph.node_count()`; corpus nodes do not link back to it.
#[derive(Debug, Clone)]
pub struct QueryView<'g> {
    graph: &'g MultiModalGraph,
    feature: Vec<f32>,
    neighbors: Vec<NodeId>,
    pub tags: ResolvedTags,
}

impl<'g> QueryView<'g> {
    pub fn virtual_id(&self) -> NodeId {
        NodeId(self.graph.node_count() as u64)
    }

    pub fn attached(&self) -> &[NodeId] {
        &self.neighbors
    }

    pub fn feature(&self) -> &[f32] {
        &self.feature
    }
}

impl NeighborSource for QueryView<'_> {
    fn neighbors_of(&self, v: NodeId) -> &[NodeId] {
        if v == self.virtual_id() {
            &self.neighbors
        } else {
            self.graph.neighbors_of(v)
        }
    }
}

impl FeatureSource for QueryView<'_> {
    fn feature_dim(&self) -> usize {
        self.graph.d_in()
    }

    fn feature_of(&self, v: NodeId) -> &[f32] {
        if v == self.virtual_id() {
            &self.feature
        } else {
            self.graph.feature_of(v)
        }
    }
}

/// Connect a virtual query node according to `spec.connectivity`.
pub fn attach_query<'g>(g: &'g MultiModalGraph, attach: &AttachIndex, spec: &QuerySpec) -> Result<QueryView<'g>> {
    let wants_images = matches!(
        spec.connectivity,
        Connectivity::ImageOnly { .. } | Connectivity::Both { .. }
    );
    let wants_tags = matches!(spec.connectivity, Connectivity::TagOnly | Connectivity::Both { .. });

    if let Some(f) = &spec.init_feature {
        if f.len() != g.d_in() {
            return Err(Error::DimensionMismatch {
                expected: g.d_in(),
                actual: f.len(),
            });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature);
        }
    }

    let mut neighbors = Vec::new();
    if wants_images {
        let sim = spec
            .sim_feature
            .as_deref()
            .or(spec.init_feature.as_deref())
            .ok_or(Error::MissingImageFeature)?;
        let k = match spec.connectivity {
            Connectivity::ImageOnly { k } | Connectivity::Both { k } => k,
            Connectivity::TagOnly => 0,
        };
        neighbors.extend(attach.nearest(sim, k)?);
    }

    let tags = if wants_tags {
        let resolved = resolve_tags(g, &spec.tags);
        if resolved.ids.is_empty() {
            return Err(Error::NoResolvableTags);
        }
        neighbors.extend_from_slice(&resolved.ids);
        resolved
    } else {
        ResolvedTags::default()
    };
    neighbors.sort_unstable();
    neighbors.dedup();

    let feature = match &spec.init_feature {
        Some(f) => f.clone(),
        None if wants_tags => {
            let mut mean = vec![0.0f64; g.d_in()];
            for &t in &tags.ids {
                for (m, &v) in mean.iter_mut().zip(g.feature_of(t)) {
                    *m += v as f64;
                }
            }
            let n = tags.ids.len() as f64;
            mean.into_iter().map(|m| (m / n) as f32).collect()
        }
        None => return Err(Error::MissingImageFeature),
    };
    Ok(QueryView {
        graph: g,
        feature,
        neighbors,
        tags,
    })
}

/// Inference-mode embedding of the virtual node.
pub fn embed_query(view: &QueryView<'_>, model: &Model<f32>) -> Result<Vec<f32>> {
    let rows = embed_nodes(view, model, &[view.virtual_id()])?;
    Ok(rows.row(0).to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedNode {
    pub id: NodeId,
    pub key: String,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub results: Vec<RankedNode>,
    pub effective: BlendWeights,
    pub resolved_tags: Vec<String>,
    pub dropped_tags: Vec<String>,
}

/// Read-only bundle of everything a query needs.
#[derive(Debug, Clone, Copy)]
pub struct QueryEngine<'a> {
    pub graph: &'a MultiModalGraph,
    pub model: &'a Model<f32>,
    pub table: &'a EmbeddingTable,
    pub index: &'a EmbeddingIndex,
    pub attach: &'a AttachIndex,
}

impl<'a> QueryEngine<'a> {
    fn ranked(&self, hits: Vec<Hit>) -> Result<Vec<RankedNode>> {
        hits.into_iter()
            .map(|h| {
                Ok(RankedNode {
                    id: h.id,
                    key: self.graph.key(h.id)?.to_string(),
                    score: h.score,
                })
            })
            .collect()
    }

    /// Embedding of the query image. `Both` attaches to images only, so that
    /// the visual endpoint of the blend stays purely visual.
    pub fn image_embedding(&self, spec: &QuerySpec) -> Result<Vec<f32>> {
        let connectivity = match spec.connectivity {
            Connectivity::Both { k } => Connectivity::ImageOnly { k },
            c => c,
        };
        let spec = QuerySpec {
            connectivity,
            ..spec.clone()
        };
        embed_query(&attach_query(self.graph, self.attach, &spec)?, self.model)
    }

    fn exclusions(&self, spec: &QuerySpec) -> BTreeSet<NodeId> {
        match (spec.exclude_attached, spec.source) {
            (true, Some(id)) => [id].into_iter().collect(),
            _ => BTreeSet::new(),
        }
    }

    pub fn retrieve_images(&self, spec: &QuerySpec) -> Result<RetrievalResult> {
        let has_image = spec.init_feature.is_some();
        if !has_image && spec.tags.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let resolved = resolve_tags(self.graph, &spec.tags);
        if !spec.tags.is_empty() && resolved.ids.is_empty() {
            return Err(Error::NoResolvableTags);
        }
        let has_tags = !resolved.ids.is_empty();
        let effective = match (has_image, has_tags) {
            (true, false) => BlendWeights::visual(),
            (false, true) => BlendWeights::conceptual(),
            _ => spec.blend,
        };
        let width = self.table.dim();
        let e_image = if has_image && effective.w_visual() > 0.0 {
            self.image_embedding(spec)?
        } else {
            vec![0.0; width]
        };
        let e_concept = if has_tags {
            concept_embedding(&resolved.ids, self.table)?
        } else {
            vec![0.0; width]
        };
        let query = blend(&e_image, &e_concept, effective)?;
        let hits = self
            .index
            .top_k(&query, spec.k_results, Some(NodeKind::Image), &self.exclusions(spec))?;
        Ok(RetrievalResult {
            results: self.ranked(hits)?,
            effective,
            resolved_tags: resolved
                .ids
                .iter()
                .map(|&t| self.graph.key(t).map(|k| crate::ingest::tag_name(k).to_string()))
                .collect::<Result<_>>()?,
            dropped_tags: resolved.dropped,
        })
    }

    /// Rank tags for an image attached to its closest corpus images.
    pub fn predict_tags(&self, spec: &QuerySpec, k: usize) -> Result<Vec<RankedNode>> {
        if spec.init_feature.is_none() {
            return Err(Error::MissingImageFeature);
        }
        let k_attach = match spec.connectivity {
            Connectivity::ImageOnly { k } | Connectivity::Both { k } => k,
            Connectivity::TagOnly => DEFAULT_ATTACH_K,
        };
        let spec = QuerySpec {
            connectivity: Connectivity::ImageOnly { k: k_attach },
            ..spec.clone()
        };
        let e = embed_query(&attach_query(self.graph, self.attach, &spec)?, self.model)?;
        let hits = self.index.top_k(&e, k, Some(NodeKind::Tag), &BTreeSet::new())?;
        self.ranked(hits)
    }
}
