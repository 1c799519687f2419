//! The multi-modal graph: image and tag nodes, typed undirected edges and one
//! feature vector per node.
//!
//! Graphs are assembled through [`GraphBuilder`] and then frozen into an
//! immutable [`MultiModalGraph`], which stores adjacency in compressed form
//! and can be shared freely between threads.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Dense node identifier, assigned in insertion order starting at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId(pub u64);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Image,
    Tag,
}

impl NodeKind {
    pub fn as_u8(self) -> u8 {
        match self {
            NodeKind::Image => 0,
            NodeKind::Tag => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(NodeKind::Image),
            1 => Some(NodeKind::Tag),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Image => "image",
            NodeKind::Tag => "tag",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    ImageImage,
    ImageTag,
}

impl EdgeKind {
    pub fn as_u8(self) -> u8 {
        match self {
            EdgeKind::ImageImage => 0,
            EdgeKind::ImageTag => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(EdgeKind::ImageImage),
            1 => Some(EdgeKind::ImageTag),
            _ => None,
        }
    }

    fn admits(self, a: NodeKind, b: NodeKind) -> bool {
        match self {
            EdgeKind::ImageImage => a == NodeKind::Image && b == NodeKind::Image,
            EdgeKind::ImageTag => {
                matches!(
                    (a, b),
                    (NodeKind::Image, NodeKind::Tag) | (NodeKind::Tag, NodeKind::Image)
                )
            }
        }
    }
}

/// Anything that can list the neighbors of a node, sorted ascending.
pub trait NeighborSource {
    fn neighbors_of(&self, v: NodeId) -> &[NodeId];
}

/// Anything that can hand out the input feature of a node.
pub trait FeatureSource {
    fn feature_dim(&self) -> usize;
    fn feature_of(&self, v: NodeId) -> &[f32];
}

fn check_feature(feature: &[f32], d_in: usize) -> Result<()> {
    if feature.len() != d_in {
        return Err(Error::DimensionMismatch {
            expected: d_in,
            actual: feature.len(),
        });
    }
    if feature.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteFeature);
    }
    Ok(())
}

/// Append-only graph under construction.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    d_in: usize,
    keys: Vec<String>,
    kinds: Vec<NodeKind>,
    features: Vec<f32>,
    adjacency: Vec<Vec<(NodeId, EdgeKind)>>,
    key_index: BTreeMap<String, NodeId>,
}

impl GraphBuilder {
    pub fn new(d_in: usize) -> Self {
        Self {
            d_in,
            keys: Vec::new(),
            kinds: Vec::new(),
            features: Vec::new(),
            adjacency: Vec::new(),
            key_index: BTreeMap::new(),
        }
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn add_node(&mut self, key: &str, kind: NodeKind, feature: &[f32]) -> Result<NodeId> {
        if self.key_index.contains_key(key) {
            return Err(Error::DuplicateKey(key.to_string()));
        }
        check_feature(feature, self.d_in)?;
        let id = NodeId(self.kinds.len() as u64);
        self.keys.push(key.to_string());
        self.kinds.push(kind);
        self.features.extend_from_slice(feature);
        self.adjacency.push(Vec::new());
        self.key_index.insert(key.to_string(), id);
        Ok(id)
    }

    fn kind(&self, v: NodeId) -> Result<NodeKind> {
        self.kinds.get(v.index()).copied().ok_or(Error::UnknownNode(v.0))
    }

    pub fn add_edge(&mut self, u: NodeId, v: NodeId, kind: EdgeKind) -> Result<()> {
        let (ku, kv) = (self.kind(u)?, self.kind(v)?);
        if u == v {
            return Err(Error::SelfLoop(u.0));
        }
        if !kind.admits(ku, kv) {
            return Err(Error::KindMismatch(u.0, v.0));
        }
        let pos_u = match self.adjacency[u.index()].binary_search_by_key(&v, |e| e.0) {
            Ok(_) => return Err(Error::DuplicateEdge(u.0, v.0)),
            Err(p) => p,
        };
        self.adjacency[u.index()].insert(pos_u, (v, kind));
        let pos_v = self.adjacency[v.index()].binary_search_by_key(&u, |e| e.0).unwrap_err();
        self.adjacency[v.index()].insert(pos_v, (u, kind));
        Ok(())
    }

    pub fn node_by_key(&self, key: &str) -> Option<NodeId> {
        self.key_index.get(key).copied()
    }

    pub fn neighbors(&self, v: NodeId, filter: Option<EdgeKind>) -> Result<Vec<NodeId>> {
        let adj = self.adjacency.get(v.index()).ok_or(Error::UnknownNode(v.0))?;
        Ok(adj
            .iter()
            .filter(|(_, k)| filter.is_none_or(|f| f == *k))
            .map(|(n, _)| *n)
            .collect())
    }

    /// Finish construction. The result is immutable.
    pub fn freeze(self) -> MultiModalGraph {
        let mut offsets = Vec::with_capacity(self.adjacency.len() + 1);
        let mut targets = Vec::new();
        let mut edge_kinds = Vec::new();
        offsets.push(0);
        for list in &self.adjacency {
            for &(n, k) in list {
                targets.push(n);
                edge_kinds.push(k);
            }
            offsets.push(targets.len());
        }
        MultiModalGraph {
            d_in: self.d_in,
            keys: self.keys,
            kinds: self.kinds,
            features: self.features,
            offsets,
            targets,
            edge_kinds,
            key_index: self.key_index,
        }
    }
}

/// Frozen multi-modal graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiModalGraph {
    d_in: usize,
    keys: Vec<String>,
    kinds: Vec<NodeKind>,
    features: Vec<f32>,
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
    edge_kinds: Vec<EdgeKind>,
    key_index: BTreeMap<String, NodeId>,
}

impl MultiModalGraph {
    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.index() < self.kinds.len()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.kinds.len() as u64).map(NodeId)
    }

    pub fn kind(&self, v: NodeId) -> Result<NodeKind> {
        self.kinds.get(v.index()).copied().ok_or(Error::UnknownNode(v.0))
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn key(&self, v: NodeId) -> Result<&str> {
        self.keys
            .get(v.index())
            .map(String::as_str)
            .ok_or(Error::UnknownNode(v.0))
    }

    pub fn node_by_key(&self, key: &str) -> Option<NodeId> {
        self.key_index.get(key).copied()
    }

    pub fn feature(&self, v: NodeId) -> Result<&[f32]> {
        if !self.contains(v) {
            return Err(Error::UnknownNode(v.0));
        }
        Ok(&self.features[v.index() * self.d_in..(v.index() + 1) * self.d_in])
    }

    pub fn degree(&self, v: NodeId) -> Result<usize> {
        if !self.contains(v) {
            return Err(Error::UnknownNode(v.0));
        }
        Ok(self.offsets[v.index() + 1] - self.offsets[v.index()])
    }

    /// Neighbors of `v`, ascending, optionally restricted to one edge kind.
    pub fn neighbors(&self, v: NodeId, filter: Option<EdgeKind>) -> Result<Vec<NodeId>> {
        if !self.contains(v) {
            return Err(Error::UnknownNode(v.0));
        }
        let range = self.offsets[v.index()]..self.offsets[v.index() + 1];
        Ok(self.targets[range.clone()]
            .iter()
            .zip(&self.edge_kinds[range])
            .filter(|(_, k)| filter.is_none_or(|f| f == **k))
            .map(|(n, _)| *n)
            .collect())
    }

    /// Every undirected edge once, as `(u, v, kind)` with `u < v`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, EdgeKind)> + '_ {
        self.node_ids().flat_map(move |u| {
            let range = self.offsets[u.index()]..self.offsets[u.index() + 1];
            self.targets[range.clone()]
                .iter()
                .zip(&self.edge_kinds[range])
                .filter(move |(v, _)| **v > u)
                .map(move |(v, k)| (u, *v, *k))
        })
    }

    /// Rebuild a graph from its serialized parts. Edges may come in any order
    /// but must satisfy every builder rule.
    pub fn from_parts(
        d_in: usize,
        nodes: Vec<(String, NodeKind, Vec<f32>)>,
        edges: &[(NodeId, NodeId, EdgeKind)],
    ) -> Result<Self> {
        let mut b = GraphBuilder::new(d_in);
        for (key, kind, feature) in &nodes {
            b.add_node(key, *kind, feature)?;
        }
        for &(u, v, k) in edges {
            b.add_edge(u, v, k)?;
        }
        Ok(b.freeze())
    }
}

impl NeighborSource for MultiModalGraph {
    #[inline]
    fn neighbors_of(&self, v: NodeId) -> &[NodeId] {
        &self.targets[self.offsets[v.index()]..self.offsets[v.index() + 1]]
    }
}

impl FeatureSource for MultiModalGraph {
    fn feature_dim(&self) -> usize {
        self.d_in
    }

    #[inline]
    fn feature_of(&self, v: NodeId) -> &[f32] {
        &self.features[v.index() * self.d_in..(v.index() + 1) * self.d_in]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn zeros(d: usize) -> Vec<f32> {
        vec![0.0; d]
    }

    #[test]
    fn first_node_gets_id_zero() {
        let mut b = GraphBuilder::new(4);
        assert_eq!(b.add_node("a", NodeKind::Image, &zeros(4)).unwrap(), NodeId(0));
        assert_eq!(b.add_node("b", NodeKind::Tag, &zeros(4)).unwrap(), NodeId(1));
    }

    #[test]
    fn add_node_rejects_bad_input() {
        let mut b = GraphBuilder::new(4);
        b.add_node("a", NodeKind::Image, &zeros(4)).unwrap();
        assert_eq!(
            b.add_node("a", NodeKind::Image, &zeros(4)),
            Err(Error::DuplicateKey("a".into()))
        );
        assert_eq!(
            b.add_node("b", NodeKind::Image, &zeros(3)),
            Err(Error::DimensionMismatch { expected: 4, actual: 3 })
        );
        assert_eq!(
            b.add_node("c", NodeKind::Image, &[0.0, f32::NAN, 0.0, 0.0]),
            Err(Error::NonFiniteFeature)
        );
        assert_eq!(b.node_count(), 1);
    }

    #[test]
    fn edges_are_symmetric_and_typed() {
        let mut b = GraphBuilder::new(1);
        let img0 = b.add_node("img0", NodeKind::Image, &[0.0]).unwrap();
        let tag0 = b.add_node("tag0", NodeKind::Tag, &[0.0]).unwrap();
        let tag1 = b.add_node("tag1", NodeKind::Tag, &[0.0]).unwrap();
        b.add_edge(img0, tag0, EdgeKind::ImageTag).unwrap();
        assert_eq!(b.neighbors(img0, None).unwrap(), vec![tag0]);
        assert_eq!(b.neighbors(tag0, None).unwrap(), vec![img0]);
        assert_eq!(
            b.add_edge(tag0, tag1, EdgeKind::ImageTag),
            Err(Error::KindMismatch(1, 2))
        );
        assert_eq!(
            b.add_edge(img0, tag1, EdgeKind::ImageImage),
            Err(Error::KindMismatch(0, 2))
        );
        assert_eq!(
            b.add_edge(tag0, img0, EdgeKind::ImageTag),
            Err(Error::DuplicateEdge(1, 0))
        );
        assert_eq!(b.add_edge(img0, img0, EdgeKind::ImageImage), Err(Error::SelfLoop(0)));
        assert_eq!(
            b.add_edge(img0, NodeId(9), EdgeKind::ImageImage),
            Err(Error::UnknownNode(9))
        );
    }

    #[test]
    fn neighbors_sorted_and_filtered() {
        let mut b = GraphBuilder::new(1);
        let ids: Vec<NodeId> = (0..6)
            .map(|i| {
                let kind = if i == 5 { NodeKind::Tag } else { NodeKind::Image };
                b.add_node(&alloc::format!("n{i}"), kind, &[0.0]).unwrap()
            })
            .collect();
        let isolated = ids[3];
        b.add_edge(ids[0], ids[5], EdgeKind::ImageTag).unwrap();
        b.add_edge(ids[0], ids[2], EdgeKind::ImageImage).unwrap();
        let g = b.freeze();
        assert!(g.neighbors(isolated, None).unwrap().is_empty());
        assert_eq!(g.neighbors(ids[0], None).unwrap(), vec![ids[2], ids[5]]);
        assert_eq!(g.neighbors(ids[0], Some(EdgeKind::ImageTag)).unwrap(), vec![ids[5]]);
        assert_eq!(g.neighbors(ids[0], Some(EdgeKind::ImageImage)).unwrap(), vec![ids[2]]);
        assert_eq!(g.neighbors(NodeId(42), None), Err(Error::UnknownNode(42)));
        assert_eq!(g.edge_count(), 2);
    }

    proptest! {
        #[test]
        fn random_edge_sequences_keep_invariants(
            kinds in proptest::collection::vec(any::<bool>(), 2..12),
            pairs in proptest::collection::vec((0usize..12, 0usize..12), 0..40),
        ) {
            let mut b = GraphBuilder::new(2);
            for (i, is_tag) in kinds.iter().enumerate() {
                let kind = if *is_tag { NodeKind::Tag } else { NodeKind::Image };
                b.add_node(&alloc::format!("k{i}"), kind, &[i as f32, 1.0]).unwrap();
            }
            let n = kinds.len();
            for (u, v) in pairs {
                let (u, v) = (NodeId((u % n) as u64), NodeId((v % n) as u64));
                let kind = if kinds[u.index()] || kinds[v.index()] {
                    EdgeKind::ImageTag
                } else {
                    EdgeKind::ImageImage
                };
                let _ = b.add_edge(u, v, kind);
            }
            let g = b.freeze();
            for u in g.node_ids() {
                let nu = g.neighbors(u, None).unwrap();
                prop_assert!(nu.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(!nu.contains(&u));
                for v in nu {
                    prop_assert!(g.neighbors(v, None).unwrap().contains(&u));
                }
            }
            for (u, v, _) in g.edges() {
                prop_assert!(!(g.kind(u).unwrap() == NodeKind::Tag && g.kind(v).unwrap() == NodeKind::Tag));
            }
            prop_assert_eq!(g.edges().count(), g.edge_count());
        }
    }
}
