//! Unsupervised training loop and whole-graph embedding.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::encoder::{
    backward, forward, negative_sampling_loss, ComputeTree, EncoderConfig, EncoderDims, EncoderParams, Mode, Model,
};
use crate::error::{Error, Result};
use crate::graph::{FeatureSource, MultiModalGraph, NeighborSource, NodeId};
use crate::index::EmbeddingTable;
use crate::matrix::Matrix;
use crate::optim::{build_optimizer, OptimizerKind};
use crate::real::Real;
use crate::rng::{derive_seed, rng_for, stream};
use crate::sampler::{cap_adjacency, generate_pairs_on, sample_fanout, NegativeSampler, SamplerConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Layer widths; the input width always comes from the graph.
    pub hidden: [usize; 2],
    pub sampler: SamplerConfig,
    pub encoder: EncoderConfig,
    /// Draw fresh walks every epoch instead of reusing the first epoch's.
    pub regenerate_pairs: bool,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 512,
            learning_rate: 1e-5,
            optimizer: OptimizerKind::default(),
            hidden: [128, 128],
            sampler: SamplerConfig::default(),
            encoder: EncoderConfig::default(),
            regenerate_pairs: true,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive"));
        }
        self.sampler.validate()?;
        self.encoder.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    pub model: Model<T>,
    /// Mean loss over all positive pairs of each epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn train<T: Real>(g: &MultiModalGraph, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    train_with(g, cfg, |_, _| {})
}

/// Like [`train`], calling `on_epoch(epoch, mean_loss)` after every epoch.
pub fn train_with<T: Real>(
    g: &MultiModalGraph,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if g.node_count() < 2 || g.edge_count() == 0 {
        return Err(Error::DegenerateGraph);
    }
    let dims = EncoderDims {
        input: g.d_in(),
        hidden: cfg.hidden,
    };
    let sc = &cfg.sampler;
    let adj = cap_adjacency(g, sc);
    let negatives = NegativeSampler::new(g, sc.neg_exponent)?;
    let mut params = EncoderParams::<T>::init(dims, cfg.rng_seed);
    let mut optimizer = build_optimizer::<T>(cfg.optimizer, cfg.learning_rate);

    let mut pairs = Vec::new();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if epoch == 0 || cfg.regenerate_pairs {
            let seed = derive_seed(sc.rng_seed, epoch as u64 + 1);
            pairs = generate_pairs_on(&adj, g.node_count(), sc.walks_per_node, sc.walk_length, seed);
            if pairs.is_empty() {
                return Err(Error::DegenerateGraph);
            }
        }
        let mut rng = rng_for(derive_seed(cfg.rng_seed, epoch as u64 + 1), stream::BATCHES);
        pairs.shuffle(&mut rng);

        let mut total = 0.0f64;
        for batch in pairs.chunks(cfg.batch_size) {
            let b = batch.len();
            let negs = negatives.sample(sc.negatives_per_positive, &mut rng);
            let mut roots = Vec::with_capacity(2 * b + negs.len());
            roots.extend(batch.iter().map(|p| p.u));
            roots.extend(batch.iter().map(|p| p.v));
            roots.extend_from_slice(&negs);
            let sample = sample_fanout(&adj, &roots, sc.fanouts, &mut rng);
            let tree = ComputeTree::from_sample(&sample);

            let fwd = forward(&params, &cfg.encoder, &tree, g, Mode::Train(&mut rng))?;
            let positives: Vec<(usize, usize)> = (0..b).map(|i| (i, b + i)).collect();
            let neg_rows: Vec<usize> = (2 * b..2 * b + negs.len()).collect();
            let (loss, dz) = negative_sampling_loss(fwd.embeddings(), &positives, &neg_rows)?;
            let grads = backward(&params, &cfg.encoder, &tree, &fwd, &dz, false)?;
            optimizer.step(&mut params, &grads.params);
            if !params.is_finite() {
                return Err(Error::NonFiniteActivation);
            }
            total += loss.to_f64().unwrap_or(f64::NAN) * b as f64;
        }
        let mean = total / pairs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFiniteActivation);
        }
        on_epoch(epoch + 1, mean);
        epoch_losses.push(mean);
    }

    Ok(TrainOutcome {
        model: Model {
            config: cfg.encoder,
            fanouts: sc.fanouts,
            params,
        },
        epoch_losses,
    })
}

const EMBED_CHUNK: usize = 256;

/// Inference-mode embeddings of `roots` over any neighbor/feature source.
pub fn embed_nodes<T: Real, S>(src: &S, model: &Model<T>, roots: &[NodeId]) -> Result<Matrix<f32>>
where
    S: NeighborSource + FeatureSource,
{
    let width = model.params.dims().output();
    let mut out = Matrix::zeros(roots.len(), width);
    for (c, chunk) in roots.chunks(EMBED_CHUNK).enumerate() {
        let tree = ComputeTree::deterministic(chunk, src, model.fanouts);
        let fwd = forward(&model.params, &model.config, &tree, src, Mode::Infer)?;
        for r in 0..chunk.len() {
            let dst = out.row_mut(c * EMBED_CHUNK + r);
            for (d, &v) in dst.iter_mut().zip(fwd.embeddings().row(r)) {
                *d = v.to_f32_lossy();
            }
        }
    }
    Ok(out)
}

/// Embed every node of the graph.
pub fn embed_all<T: Real>(g: &MultiModalGraph, model: &Model<T>) -> Result<EmbeddingTable> {
    let ids: Vec<NodeId> = g.node_ids().collect();
    let rows = embed_nodes(g, model, &ids)?;
    let mut table = EmbeddingTable::new(rows.cols());
    for (i, &id) in ids.iter().enumerate() {
        table.push(id, g.kind(id)?, rows.row(i))?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeKind, GraphBuilder, NodeKind};
    use alloc::format;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 16,
            learning_rate: 1e-2,
            hidden: [4, 3],
            sampler: SamplerConfig {
                walks_per_node: 4,
                walk_length: 3,
                fanouts: [3, 2],
                negatives_per_positive: 2,
                ..SamplerConfig::default()
            },
            rng_seed: 5,
            ..TrainConfig::default()
        }
    }

    fn ring(n: usize) -> MultiModalGraph {
        let mut b = GraphBuilder::new(3);
        for i in 0..n {
            let f = [i as f32, 1.0, -(i as f32) * 0.5];
            b.add_node(&format!("n{i}"), NodeKind::Image, &f).unwrap();
        }
        for i in 0..n as u64 {
            b.add_edge(NodeId(i), NodeId((i + 1) % n as u64), EdgeKind::ImageImage)
                .unwrap();
        }
        b.freeze()
    }

    #[test]
    fn isolated_nodes_are_degenerate() {
        let mut b = GraphBuilder::new(1);
        b.add_node("a", NodeKind::Image, &[1.0]).unwrap();
        b.add_node("b", NodeKind::Image, &[2.0]).unwrap();
        assert_eq!(
            train::<f32>(&b.freeze(), &small_cfg()).unwrap_err(),
            Error::DegenerateGraph
        );
    }

    #[test]
    fn seeded_training_is_bit_identical() {
        let g = ring(8);
        let a = train::<f32>(&g, &small_cfg()).unwrap();
        let b = train::<f32>(&g, &small_cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.epoch_losses.len(), 3);
        assert!(a.epoch_losses.iter().all(|l| l.is_finite() && *l >= 0.0));
        assert!(a.model.params.is_finite());
    }

    #[test]
    fn embed_all_is_total_unit_and_repeatable() {
        let g = ring(6);
        let out = train::<f32>(&g, &small_cfg()).unwrap();
        let t1 = embed_all(&g, &out.model).unwrap();
        let t2 = embed_all(&g, &out.model).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(t1.len(), g.node_count());
        for i in 0..t1.len() {
            let n: f32 = t1.row(i).iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn bad_config_is_rejected() {
        let mut cfg = small_cfg();
        cfg.batch_size = 0;
        assert!(matches!(train::<f32>(&ring(4), &cfg), Err(Error::InvalidConfig(_))));
    }
}
