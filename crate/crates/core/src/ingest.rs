//! Graph construction from image records: tag normalization, thresholded
//! visual kNN edges and image-tag edges.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{EdgeKind, GraphBuilder, MultiModalGraph, NodeId, NodeKind};
use crate::real::cosine_f64;
use crate::rng::{rng_for, stream};

/// Prefix of tag node keys, so tags share one key space with images.
pub const TAG_KEY_PREFIX: &str = "tag:";

pub fn tag_key(normalized: &str) -> String {
    let mut key = String::with_capacity(TAG_KEY_PREFIX.len() + normalized.len());
    key.push_str(TAG_KEY_PREFIX);
    key.push_str(normalized);
    key
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    pub k_neighbors: usize,
    pub similarity_threshold: f32,
    pub d_in: usize,
    pub rng_seed: u64,
    pub tag_init_scale: f32,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            similarity_threshold: 0.65,
            d_in: 512,
            rng_seed: 0,
            tag_init_scale: 0.1,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(Error::InvalidConfig("k_neighbors must be at least 1"));
        }
        if self.d_in == 0 {
            return Err(Error::InvalidConfig("d_in must be at least 1"));
        }
        if !(-1.0..=1.0).contains(&self.similarity_threshold) {
            return Err(Error::InvalidConfig("similarity_threshold must lie in [-1, 1]"));
        }
        if !(self.tag_init_scale > 0.0 && self.tag_init_scale.is_finite()) {
            return Err(Error::InvalidConfig("tag_init_scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageRecord {
    pub key: String,
    pub init_feature: Vec<f32>,
    /// Vector used only for kNN construction; falls back to `init_feature`.
    pub sim_feature: Option<Vec<f32>>,
    pub tags: Vec<String>,
}

impl ImageRecord {
    pub fn similarity_vector(&self) -> &[f32] {
        self.sim_feature.as_deref().unwrap_or(&self.init_feature)
    }
}

/// Trim, lowercase and collapse internal whitespace.
pub fn normalize_tag(raw: &str) -> Result<String> {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    if out.is_empty() {
        Err(Error::EmptyAfterNormalization)
    } else {
        Ok(out)
    }
}

/// Picks each item's visual neighbors. Brute force is the only backend today.
pub trait NeighborSelector {
    /// For every item, the indices of its selected neighbors in rank order.
    fn select(&self, vectors: &[&[f32]], keys: &[&str], k: usize, threshold: f32) -> Vec<Vec<usize>>;
}

/// Exhaustive pairwise cosine scan.
#[derive(Debug, Clone, Copy, Default)]
pub struct BruteForceKnn;

impl NeighborSelector for BruteForceKnn {
    fn select(&self, vectors: &[&[f32]], keys: &[&str], k: usize, threshold: f32) -> Vec<Vec<usize>> {
        let n = vectors.len();
        let threshold = threshold as f64;
        (0..n)
            .map(|i| {
                let mut cands: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .filter_map(|j| {
                        let c = cosine_f64(vectors[i], vectors[j])?;
                        (c >= threshold).then_some((c, j))
                    })
                    .collect();
                cands.sort_by(|a, b| {
                    b.0.partial_cmp(&a.0)
                        .unwrap_or(Ordering::Equal)
                        .then_with(|| keys[a.1].cmp(keys[b.1]))
                });
                cands.truncate(k);
                cands.into_iter().map(|(_, j)| j).collect()
            })
            .collect()
    }
}

fn validated_vectors(records: &[ImageRecord]) -> Result<Vec<&[f32]>> {
    let first = records.first().ok_or(Error::EmptyInput)?;
    let dim = first.similarity_vector().len();
    records
        .iter()
        .map(|r| {
            let v = r.similarity_vector();
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteFeature);
            }
            if v.iter().all(|&x| x == 0.0) {
                return Err(Error::ZeroVector(r.key.clone()));
            }
            Ok(v)
        })
        .collect()
}

/// Per-record neighbor selections (indices into `records`).
pub fn select_knn(
    records: &[ImageRecord],
    cfg: &BuildConfig,
    selector: &impl NeighborSelector,
) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    let vectors = validated_vectors(records)?;
    let keys: Vec<&str> = records.iter().map(|r| r.key.as_str()).collect();
    Ok(selector.select(&vectors, &keys, cfg.k_neighbors, cfg.similarity_threshold))
}

fn union_pairs(selected: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = selected
        .iter()
        .enumerate()
        .flat_map(|(i, js)| js.iter().map(move |&j| (i.min(j), i.max(j))))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Undirected kNN edges as key pairs. Each pair is ordered lexicographically
/// and the list is sorted.
pub fn build_knn_edges(records: &[ImageRecord], cfg: &BuildConfig) -> Result<Vec<(String, String)>> {
    let selected = select_knn(records, cfg, &BruteForceKnn)?;
    let mut edges: Vec<(String, String)> = union_pairs(&selected)
        .into_iter()
        .map(|(a, b)| {
            let (ka, kb) = (&records[a].key, &records[b].key);
            if ka <= kb {
                (ka.clone(), kb.clone())
            } else {
                (kb.clone(), ka.clone())
            }
        })
        .collect();
    edges.sort();
    Ok(edges)
}

/// Build and freeze the graph. Images get ids `0..records.len()` in record
/// order; tags follow in order of first appearance.
pub fn build_graph(records: &[ImageRecord], cfg: &BuildConfig) -> Result<MultiModalGraph> {
    build_graph_with(records, cfg, &BruteForceKnn)
}

pub fn build_graph_with(
    records: &[ImageRecord],
    cfg: &BuildConfig,
    selector: &impl NeighborSelector,
) -> Result<MultiModalGraph> {
    let selected = select_knn(records, cfg, selector)?;

    let mut builder = GraphBuilder::new(cfg.d_in);
    for r in records {
        builder.add_node(&r.key, NodeKind::Image, &r.init_feature)?;
    }

    let mut tag_ids: BTreeMap<String, NodeId> = BTreeMap::new();
    let mut image_tags: Vec<Vec<NodeId>> = Vec::with_capacity(records.len());
    let mut rng = rng_for(cfg.rng_seed, stream::TAGS);
    let scale = cfg.tag_init_scale;
    let mut feature = Vec::with_capacity(cfg.d_in);
    for r in records {
        let mut ids = Vec::with_capacity(r.tags.len());
        for raw in &r.tags {
            let tag = normalize_tag(raw)?;
            let id = match tag_ids.get(&tag) {
                Some(&id) => id,
                None => {
                    feature.clear();
                    feature.extend((0..cfg.d_in).map(|_| rng.random_range(-scale..=scale)));
                    let id = builder.add_node(&tag_key(&tag), NodeKind::Tag, &feature)?;
                    tag_ids.insert(tag, id);
                    id
                }
            };
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        image_tags.push(ids);
    }

    for (i, tags) in image_tags.iter().enumerate() {
        for &t in tags {
            builder.add_edge(NodeId(i as u64), t, EdgeKind::ImageTag)?;
        }
    }
    for (a, b) in union_pairs(&selected) {
        builder.add_edge(NodeId(a as u64), NodeId(b as u64), EdgeKind::ImageImage)?;
    }
    Ok(builder.freeze())
}

/// Key lookup for a raw tag string, if the tag exists in the graph.
pub fn resolve_tag(graph: &MultiModalGraph, raw: &str) -> Option<NodeId> {
    let tag = normalize_tag(raw).ok()?;
    let id = graph.node_by_key(&tag_key(&tag))?;
    (graph.kind(id).ok()? == NodeKind::Tag).then_some(id)
}

/// Normalized tag name of a tag node key.
pub fn tag_name(key: &str) -> &str {
    key.strip_prefix(TAG_KEY_PREFIX).unwrap_or(key)
}

impl ImageRecord {
    pub fn new(key: &str, init_feature: Vec<f32>, tags: &[&str]) -> Self {
        Self {
            key: key.to_string(),
            init_feature,
            sim_feature: None,
            tags: tags.iter().map(|t| t.to_string()).collect(),
        }
    }
}
