//! Training-data sampling: degree-capped adjacency, random-walk positive
//! pairs, fixed-fanout neighborhood samples and degree-weighted negatives.

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::graph::{MultiModalGraph, NeighborSource, NodeId};
use crate::rng::{derive_seed, rng_for, stream, EngineRng};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub walks_per_node: usize,
    pub walk_length: usize,
    /// Per-layer neighborhood sizes, outermost layer first.
    pub fanouts: [usize; 2],
    pub max_degree: usize,
    pub negatives_per_positive: usize,
    pub neg_exponent: f64,
    pub rng_seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            walks_per_node: 50,
            walk_length: 5,
            fanouts: [25, 10],
            max_degree: 100,
            negatives_per_positive: 20,
            neg_exponent: 0.75,
            rng_seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walks_per_node == 0 || self.walk_length == 0 {
            return Err(Error::InvalidConfig("walk counts must be positive"));
        }
        if self.fanouts.contains(&0) {
            return Err(Error::InvalidConfig("fanouts must be positive"));
        }
        if self.max_degree == 0 {
            return Err(Error::InvalidConfig("max_degree must be positive"));
        }
        if self.negatives_per_positive == 0 {
            return Err(Error::InvalidConfig("negatives_per_positive must be positive"));
        }
        if !self.neg_exponent.is_finite() {
            return Err(Error::InvalidConfig("neg_exponent must be finite"));
        }
        Ok(())
    }
}

/// Per-node neighbor lists subsampled to at most `max_degree` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CappedAdjacency {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
}

impl CappedAdjacency {
    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }
}

impl NeighborSource for CappedAdjacency {
    #[inline]
    fn neighbors_of(&self, v: NodeId) -> &[NodeId] {
        &self.targets[self.offsets[v.index()]..self.offsets[v.index() + 1]]
    }
}

/// Cap every neighbor list at `max_degree` by uniform sampling without
/// replacement. Kept lists stay sorted ascending.
pub fn cap_adjacency(g: &MultiModalGraph, cfg: &SamplerConfig) -> CappedAdjacency {
    let cap_seed = derive_seed(cfg.rng_seed, stream::CAP);
    let mut offsets = Vec::with_capacity(g.node_count() + 1);
    let mut targets = Vec::new();
    offsets.push(0);
    for v in g.node_ids() {
        let full = g.neighbors_of(v);
        if full.len() <= cfg.max_degree {
            targets.extend_from_slice(full);
        } else {
            let mut rng = rng_for(cap_seed, v.0);
            let mut picked = index::sample(&mut rng, full.len(), cfg.max_degree).into_vec();
            picked.sort_unstable();
            targets.extend(picked.into_iter().map(|i| full[i]));
        }
        offsets.push(targets.len());
    }
    CappedAdjacency { offsets, targets }
}

/// A co-occurrence pair: `v` was visited on a walk starting at `u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PositivePair {
    pub u: NodeId,
    pub v: NodeId,
}

/// Walk generator seed for one start node. Public so tests can replay walks.
pub fn walk_seed(seed: u64, start: NodeId) -> u64 {
    derive_seed(derive_seed(seed, stream::WALKS), start.0)
}

/// Uniform random walks from every node over `adj`. Output is ordered by
/// (start node, walk index, step).
pub fn generate_pairs_on(
    adj: &impl NeighborSource,
    node_count: usize,
    walks_per_node: usize,
    walk_length: usize,
    seed: u64,
) -> Vec<PositivePair> {
    let mut pairs = Vec::new();
    for u in (0..node_count as u64).map(NodeId) {
        if adj.neighbors_of(u).is_empty() {
            continue;
        }
        let mut rng = EngineRng::seed_from_u64(walk_seed(seed, u));
        for _ in 0..walks_per_node {
            let mut cur = u;
            for _ in 0..walk_length {
                let nbrs = adj.neighbors_of(cur);
                if nbrs.is_empty() {
                    break;
                }
                cur = nbrs[rng.random_range(0..nbrs.len())];
                if cur != u {
                    pairs.push(PositivePair { u, v: cur });
                }
            }
        }
    }
    pairs
}

/// Convenience wrapper: cap the graph, then walk it with `cfg.rng_seed`.
pub fn generate_pairs(g: &MultiModalGraph, cfg: &SamplerConfig) -> Vec<PositivePair> {
    let adj = cap_adjacency(g, cfg);
    generate_pairs_on(&adj, g.node_count(), cfg.walks_per_node, cfg.walk_length, cfg.rng_seed)
}

/// Fixed-shape neighborhood sample. `layers[0]` holds the roots; slot `i` of
/// layer `l` owns slots `i*fanouts[l]..(i+1)*fanouts[l]` of layer `l+1`.
/// `None` marks an empty neighborhood.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayeredSample {
    pub fanouts: [usize; 2],
    pub layers: [Vec<Option<NodeId>>; 3],
}

impl LayeredSample {
    pub fn roots(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.layers[0].iter().map(|r| r.expect("roots are always present"))
    }
}

/// Sample `fanouts[l]` neighbors per node per layer, uniformly with
/// replacement.
pub fn sample_fanout(
    adj: &impl NeighborSource,
    roots: &[NodeId],
    fanouts: [usize; 2],
    rng: &mut impl Rng,
) -> LayeredSample {
    let layer0: Vec<Option<NodeId>> = roots.iter().copied().map(Some).collect();
    let mut next = |prev: &[Option<NodeId>], fanout: usize| -> Vec<Option<NodeId>> {
        let mut out = Vec::with_capacity(prev.len() * fanout);
        for slot in prev {
            match slot.map(|v| adj.neighbors_of(v)) {
                Some(nbrs) if !nbrs.is_empty() => {
                    out.extend((0..fanout).map(|_| Some(nbrs[rng.random_range(0..nbrs.len())])))
                }
                _ => out.extend(core::iter::repeat_n(None, fanout)),
            }
        }
        out
    };
    let layer1 = next(&layer0, fanouts[0]);
    let layer2 = next(&layer1, fanouts[1]);
    LayeredSample {
        fanouts,
        layers: [layer0, layer1, layer2],
    }
}

/// Draws nodes with probability proportional to `degree^exponent`.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    weights: Vec<f64>,
    dist: Option<WeightedIndex<f64>>,
}

impl NegativeSampler {
    pub fn new(g: &MultiModalGraph, exponent: f64) -> Result<Self> {
        if g.is_empty() {
            return Err(Error::DegenerateGraph);
        }
        let weights: Vec<f64> = g
            .node_ids()
            .map(|v| {
                let d = g.neighbors_of(v).len();
                if d == 0 {
                    0.0
                } else {
                    (d as f64).powf(exponent)
                }
            })
            .collect();
        // All-isolated graphs fall back to uniform draws.
        let dist = WeightedIndex::new(weights.iter().copied()).ok();
        Ok(Self { weights, dist })
    }

    /// Analytic draw probability of every node.
    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        if total > 0.0 {
            self.weights.iter().map(|w| w / total).collect()
        } else {
            vec![1.0 / self.weights.len() as f64; self.weights.len()]
        }
    }

    pub fn sample(&self, count: usize, rng: &mut impl Rng) -> Vec<NodeId> {
        (0..count)
            .map(|_| {
                let i = match &self.dist {
                    Some(d) => d.sample(rng),
                    None => rng.random_range(0..self.weights.len()),
                };
                NodeId(i as u64)
            })
            .collect()
    }
}

/// `count` i.i.d. negatives from a fresh sampler seeded by `cfg.rng_seed`.
pub fn sample_negatives(g: &MultiModalGraph, count: usize, cfg: &SamplerConfig) -> Result<Vec<NodeId>> {
    let sampler = NegativeSampler::new(g, cfg.neg_exponent)?;
    let mut rng = rng_for(cfg.rng_seed, stream::BATCHES);
    Ok(sampler.sample(count, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeKind, GraphBuilder, NodeKind};
    use alloc::format;

    fn graph(n_img: usize, edges: &[(u64, u64)]) -> MultiModalGraph {
        let mut b = GraphBuilder::new(1);
        for i in 0..n_img {
            b.add_node(&format!("i{i}"), NodeKind::Image, &[i as f32]).unwrap();
        }
        for &(u, v) in edges {
            b.add_edge(NodeId(u), NodeId(v), EdgeKind::ImageImage).unwrap();
        }
        b.freeze()
    }

    fn star(leaves: usize) -> MultiModalGraph {
        let edges: Vec<(u64, u64)> = (1..=leaves as u64).map(|i| (0, i)).collect();
        graph(leaves + 1, &edges)
    }

    #[test]
    fn cap_keeps_small_lists() {
        let g = star(3);
        let adj = cap_adjacency(&g, &SamplerConfig::default());
        assert_eq!(adj.neighbors_of(NodeId(0)), g.neighbors_of(NodeId(0)));
    }

    #[test]
    fn cap_trims_large_lists_to_subset() {
        let g = star(150);
        let cfg = SamplerConfig::default();
        let adj = cap_adjacency(&g, &cfg);
        let kept = adj.neighbors_of(NodeId(0));
        assert_eq!(kept.len(), 100);
        assert!(kept.windows(2).all(|w| w[0] < w[1]));
        assert!(kept.iter().all(|v| g.neighbors_of(NodeId(0)).contains(v)));
        assert_eq!(adj, cap_adjacency(&g, &cfg));
    }

    #[test]
    fn forced_walk_on_two_nodes() {
        let g = graph(2, &[(0, 1)]);
        let pairs = generate_pairs_on(&g, 2, 1, 2, 3);
        let from_a: Vec<_> = pairs.iter().filter(|p| p.u == NodeId(0)).collect();
        assert_eq!(
            from_a,
            vec![&PositivePair {
                u: NodeId(0),
                v: NodeId(1)
            }]
        );
    }

    #[test]
    fn isolated_nodes_emit_nothing() {
        let g = graph(3, &[(0, 1)]);
        let pairs = generate_pairs(&g, &SamplerConfig::default());
        assert!(pairs.iter().all(|p| p.u != NodeId(2) && p.v != NodeId(2)));
    }

    #[test]
    fn triangle_walks_replay_step_by_step() {
        let g = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        let seed = 99;
        let pairs = generate_pairs_on(&g, 3, 4, 3, seed);
        // Independent replay: same per-node generator, same draw order.
        let mut expected = Vec::new();
        for u in 0..3u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(walk_seed(seed, NodeId(u)));
            for _ in 0..4 {
                let mut cur = u;
                for _ in 0..3 {
                    let others: Vec<u64> = (0..3).filter(|&x| x != cur).collect();
                    cur = others[rng.random_range(0..2)];
                    if cur != u {
                        expected.push(PositivePair {
                            u: NodeId(u),
                            v: NodeId(cur),
                        });
                    }
                }
            }
        }
        assert_eq!(pairs, expected);
        assert_eq!(pairs, generate_pairs_on(&g, 3, 4, 3, seed));
    }

    #[test]
    fn pairs_are_within_walk_length_hops() {
        // path 0-1-2-3-4-5
        let g = graph(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]);
        let pairs = generate_pairs_on(&g, 6, 20, 2, 5);
        assert!(!pairs.is_empty());
        for p in pairs {
            assert_ne!(p.u, p.v);
            assert!(p.u.0.abs_diff(p.v.0) <= 2);
        }
    }

    #[test]
    fn fanout_with_single_neighbor_repeats_it() {
        let g = graph(2, &[(0, 1)]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let s = sample_fanout(&g, &[NodeId(0)], [25, 10], &mut rng);
        assert_eq!(s.layers[1], vec![Some(NodeId(1)); 25]);
        assert_eq!(s.layers[2], vec![Some(NodeId(0)); 250]);
    }

    #[test]
    fn fanout_empty_marker_propagates() {
        let g = graph(2, &[]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let s = sample_fanout(&g, &[NodeId(0), NodeId(1)], [3, 2], &mut rng);
        assert_eq!(s.layers[1], vec![None; 6]);
        assert_eq!(s.layers[2], vec![None; 12]);
    }

    #[test]
    fn fanout_shape_and_determinism() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]);
        let roots = [NodeId(0), NodeId(2), NodeId(4)];
        let run = || {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
            sample_fanout(&g, &roots, [4, 3], &mut rng)
        };
        let s = run();
        assert_eq!(s.layers[1].len(), 3 * 4);
        assert_eq!(s.layers[2].len(), 3 * 4 * 3);
        assert_eq!(s, run());
        for (i, parent) in s.layers[1].iter().enumerate() {
            let root = roots[i / 4];
            assert!(g.neighbors_of(root).contains(&parent.unwrap()));
        }
    }

    #[test]
    fn negative_probabilities_follow_degree_power() {
        // node 0 has degree 1, node 1 has degree 16: weights 1 and 8.
        let mut edges = vec![(0, 1)];
        edges.extend((2..17).map(|i| (1, i)));
        let g = graph(17, &edges);
        let probs = NegativeSampler::new(&g, 0.75).unwrap().probabilities();
        assert!((probs[0] / probs[1] - 1.0 / 8.0).abs() < 1e-12);

        let two = graph(2, &[(0, 1)]);
        assert_eq!(
            NegativeSampler::new(&two, 0.75).unwrap().probabilities(),
            vec![0.5, 0.5]
        );
        let ring = graph(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        assert_eq!(
            NegativeSampler::new(&ring, 0.75).unwrap().probabilities(),
            vec![0.25; 4]
        );
    }

    #[test]
    fn negative_frequencies_match_distribution() {
        // degrees 1, 2, 3, 1, 1
        let g = graph(5, &[(0, 2), (1, 2), (1, 3), (2, 4)]);
        let sampler = NegativeSampler::new(&g, 0.75).unwrap();
        let probs = sampler.probabilities();
        let degs = [1.0f64, 2.0, 3.0, 1.0, 1.0];
        let z: f64 = degs.iter().map(|d| d.powf(0.75)).sum();
        for (p, d) in probs.iter().zip(degs) {
            assert!((p - d.powf(0.75) / z).abs() < 1e-12);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let draws = sampler.sample(100_000, &mut rng);
        let mut counts = [0usize; 5];
        for d in draws {
            counts[d.index()] += 1;
        }
        for (c, p) in counts.iter().zip(&probs) {
            let freq = *c as f64 / 100_000.0;
            assert!((freq - p).abs() < 0.02, "freq {freq} vs {p}");
        }
    }
}
