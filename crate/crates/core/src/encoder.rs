//! Two-layer mean-aggregator encoder with concatenated self/neighbor
//! transforms, the negative-sampling objective, and its exact gradient.
//!
//! For a node `v` at layer `l`:
//!
//! ```text
//! n_v = mean(h_u for u in children(v))        (zero when v has no children)
//! h_v = act([h_v W_self[l] , n_v W_neigh[l]])
//! ```
//!
//! with a rectifier after layer 1, identity after layer 2, and an optional
//! final l2 normalization. The output width is `2 * hidden[1]`.
//!
//! Layer 1 is linear in the raw features, so the encoder projects each
//! distinct node once per tree and averages the projections instead of the
//! raw features. Dropout on layer-1 inputs is therefore drawn per distinct
//! node; dropout on layer-2 inputs is drawn per tree position.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::graph::{FeatureSource, NeighborSource, NodeId};
use crate::matrix::Matrix;
use crate::real::{dot, sigmoid, softplus, Real};
use crate::rng::{rng_for, stream};
use crate::sampler::LayeredSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderDims {
    pub input: usize,
    pub hidden: [usize; 2],
}

impl Default for EncoderDims {
    fn default() -> Self {
        Self {
            input: 512,
            hidden: [128, 128],
        }
    }
}

impl EncoderDims {
    pub fn output(&self) -> usize {
        2 * self.hidden[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    /// Drop probability for layer inputs, training mode only.
    pub dropout: f32,
    pub final_l2_normalize: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dropout: 0.2,
            final_l2_normalize: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig("dropout must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Trainable weights: self and neighbor transforms for both layers.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    pub self1: Matrix<T>,
    pub neigh1: Matrix<T>,
    pub self2: Matrix<T>,
    pub neigh2: Matrix<T>,
}

impl<T: Real> EncoderParams<T> {
    pub fn zeros(dims: EncoderDims) -> Self {
        let [h1, h2] = dims.hidden;
        Self {
            self1: Matrix::zeros(dims.input, h1),
            neigh1: Matrix::zeros(dims.input, h1),
            self2: Matrix::zeros(2 * h1, h2),
            neigh2: Matrix::zeros(2 * h1, h2),
        }
    }

    /// Glorot-uniform initialization.
    pub fn init(dims: EncoderDims, seed: u64) -> Self {
        let mut params = Self::zeros(dims);
        let mut rng = rng_for(seed, stream::INIT);
        for m in params.matrices_mut() {
            let (fan_in, fan_out) = m.shape();
            let bound = glorot_bound(fan_in, fan_out);
            for w in m.as_mut_slice() {
                *w = T::lift64(rng.random_range(-bound..=bound));
            }
        }
        params
    }

    pub fn dims(&self) -> EncoderDims {
        EncoderDims {
            input: self.self1.rows(),
            hidden: [self.self1.cols(), self.self2.cols()],
        }
    }

    pub fn check_shapes(&self) -> Result<()> {
        let d = self.dims();
        let [h1, h2] = d.hidden;
        if self.neigh1.shape() != (d.input, h1)
            || self.self2.shape() != (2 * h1, h2)
            || self.neigh2.shape() != (2 * h1, h2)
        {
            return Err(Error::ShapeMismatch("encoder parameter shapes are inconsistent"));
        }
        Ok(())
    }

    pub fn matrices(&self) -> [&Matrix<T>; 4] {
        [&self.self1, &self.neigh1, &self.self2, &self.neigh2]
    }

    pub fn matrices_mut(&mut self) -> [&mut Matrix<T>; 4] {
        [&mut self.self1, &mut self.neigh1, &mut self.self2, &mut self.neigh2]
    }

    pub fn is_finite(&self) -> bool {
        self.matrices().iter().all(|m| m.is_finite())
    }

    pub fn parameter_count(&self) -> usize {
        self.matrices().iter().map(|m| m.as_slice().len()).sum()
    }

    pub fn cast<U: Real>(&self) -> EncoderParams<U> {
        let f = |v: T| U::lift64(v.to_f64().unwrap_or(f64::NAN));
        EncoderParams {
            self1: self.self1.map(f),
            neigh1: self.neigh1.map(f),
            self2: self.self2.map(f),
            neigh2: self.neigh2.map(f),
        }
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    use num_traits::Float;
    Float::sqrt(6.0 / (fan_in + fan_out) as f64)
}

/// Everything needed to embed nodes after training.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: EncoderConfig,
    pub fanouts: [usize; 2],
    pub params: EncoderParams<T>,
}

/// Two-level computation tree over distinct nodes. Positions refer to
/// `nodes` by local index; children are stored in compressed rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputeTree {
    nodes: Vec<NodeId>,
    depth0: Vec<u32>,
    depth1: Vec<u32>,
    off1: Vec<usize>,
    depth2: Vec<u32>,
    off2: Vec<usize>,
}

#[derive(Default)]
struct Interner {
    map: BTreeMap<NodeId, u32>,
    nodes: Vec<NodeId>,
}

impl Interner {
    fn intern(&mut self, id: NodeId) -> u32 {
        *self.map.entry(id).or_insert_with(|| {
            self.nodes.push(id);
            (self.nodes.len() - 1) as u32
        })
    }
}

impl ComputeTree {
    /// Build from explicit child lists: `children1[r]` are the children of
    /// root `r`; `children2[r][c]` the children of its `c`-th child.
    pub fn from_lists(roots: &[NodeId], children1: &[Vec<NodeId>], children2: &[Vec<Vec<NodeId>>]) -> Self {
        assert_eq!(roots.len(), children1.len());
        assert_eq!(roots.len(), children2.len());
        let mut it = Interner::default();
        let depth0: Vec<u32> = roots.iter().map(|&r| it.intern(r)).collect();
        let (mut depth1, mut depth2) = (Vec::new(), Vec::new());
        let (mut off1, mut off2) = (alloc::vec![0], alloc::vec![0]);
        for (c1, c2) in children1.iter().zip(children2) {
            assert_eq!(c1.len(), c2.len());
            for (&c, grand) in c1.iter().zip(c2) {
                depth1.push(it.intern(c));
                depth2.extend(grand.iter().map(|&g| it.intern(g)));
                off2.push(depth2.len());
            }
            off1.push(depth1.len());
        }
        Self {
            nodes: it.nodes,
            depth0,
            depth1,
            off1,
            depth2,
            off2,
        }
    }

    /// Tree of a fixed-fanout training sample; empty markers become
    /// childless positions.
    pub fn from_sample(sample: &LayeredSample) -> Self {
        let [f0, f1] = sample.fanouts;
        let mut it = Interner::default();
        let depth0: Vec<u32> = sample.roots().map(|r| it.intern(r)).collect();
        let (mut depth1, mut depth2) = (Vec::new(), Vec::new());
        let (mut off1, mut off2) = (alloc::vec![0], alloc::vec![0]);
        for r in 0..depth0.len() {
            for slot in r * f0..(r + 1) * f0 {
                let Some(c) = sample.layers[1][slot] else { continue };
                depth1.push(it.intern(c));
                for g in sample.layers[2][slot * f1..(slot + 1) * f1].iter().flatten() {
                    depth2.push(it.intern(*g));
                }
                off2.push(depth2.len());
            }
            off1.push(depth1.len());
        }
        Self {
            nodes: it.nodes,
            depth0,
            depth1,
            off1,
            depth2,
            off2,
        }
    }

    /// Inference tree: every neighbor in ascending order, truncated at the
    /// layer's fanout.
    pub fn deterministic(roots: &[NodeId], src: &impl NeighborSource, fanouts: [usize; 2]) -> Self {
        let mut children1 = Vec::with_capacity(roots.len());
        let mut children2 = Vec::with_capacity(roots.len());
        for &r in roots {
            let c1: Vec<NodeId> = src.neighbors_of(r).iter().take(fanouts[0]).copied().collect();
            let c2 = c1
                .iter()
                .map(|&c| src.neighbors_of(c).iter().take(fanouts[1]).copied().collect())
                .collect();
            children1.push(c1);
            children2.push(c2);
        }
        Self::from_lists(roots, &children1, &children2)
    }

    pub fn root_count(&self) -> usize {
        self.depth0.len()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    fn upper_count(&self) -> usize {
        self.depth0.len() + self.depth1.len()
    }

    /// Node and children (as local node indices) of an upper position:
    /// roots first, then depth-1 positions.
    fn upper(&self, p: usize) -> (u32, &[u32]) {
        let r = self.depth0.len();
        if p < r {
            (self.depth0[p], &self.depth1[self.off1[p]..self.off1[p + 1]])
        } else {
            let c = p - r;
            (self.depth1[c], &self.depth2[self.off2[c]..self.off2[c + 1]])
        }
    }

    /// Range of depth-1 positions (offset by the root count) under root `r`.
    fn root_children(&self, r: usize) -> core::ops::Range<usize> {
        let base = self.depth0.len();
        base + self.off1[r]..base + self.off1[r + 1]
    }
}

pub enum Mode<'a> {
    Infer,
    Train(&'a mut dyn RngCore),
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward<T> {
    x: Matrix<T>,
    mask1: Option<Matrix<T>>,
    a1: Matrix<T>,
    h1: Matrix<T>,
    mask2: Option<Matrix<T>>,
    nbar: Matrix<T>,
    norms: Vec<T>,
    z: Matrix<T>,
}

impl<T: Real> Forward<T> {
    /// Root embeddings, one row per root.
    pub fn embeddings(&self) -> &Matrix<T> {
        &self.z
    }

    /// Layer-1 inputs after dropout, one row per distinct tree node.
    pub fn layer1_inputs(&self) -> &Matrix<T> {
        &self.x
    }

    /// Layer-1 pre-activations, one row per upper tree position.
    pub fn layer1_pre_activations(&self) -> &Matrix<T> {
        &self.a1
    }

    /// Smallest `|a|` over layer-1 pre-activations divided by the largest
    /// `|x|` over layer-1 inputs. A layer-1 weight moved by less than this
    /// cannot flip any rectifier, so the output is smooth in that range.
    pub fn kink_margin(&self) -> T {
        let min_a = self.a1.as_slice().iter().fold(T::infinity(), |m, v| m.min(v.abs()));
        let max_x = self.x.as_slice().iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if max_x == T::zero() {
            T::infinity()
        } else {
            min_a / max_x
        }
    }
}

/// Inverted-dropout mask. Each entry compares 16 random bits against the
/// keep probability scaled to 2^16; the scale uses that quantized
/// probability, so the mask has expectation exactly one.
fn dropout_mask<T: Real>(rows: usize, cols: usize, rate: f32, rng: &mut dyn RngCore) -> Matrix<T> {
    let keep = 1.0 - rate;
    let threshold = (keep as f64 * 65536.0).round() as u32;
    let scale = T::one() / T::lift64(threshold as f64 / 65536.0);
    let mut m = Matrix::zeros(rows, cols);
    let mut bits = alloc::vec![0u8; 2 * rows * cols];
    rng.fill_bytes(&mut bits);
    for (v, b) in m.as_mut_slice().iter_mut().zip(bits.chunks_exact(2)) {
        let draw = u16::from_le_bytes([b[0], b[1]]) as u32;
        *v = if draw < threshold { scale } else { T::zero() };
    }
    m
}

fn mul_in_place<T: Real>(a: &mut Matrix<T>, mask: &Matrix<T>) {
    for (v, &m) in a.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        *v = *v * m;
    }
}

fn mean_rows_into<T: Real>(src: &Matrix<T>, rows: impl ExactSizeIterator<Item = usize>, out: &mut [T]) {
    let n = rows.len();
    if n == 0 {
        return;
    }
    for r in rows {
        for (o, &v) in out.iter_mut().zip(src.row(r)) {
            *o = *o + v;
        }
    }
    let inv = T::one() / T::from_usize(n).unwrap();
    for o in out.iter_mut() {
        *o = *o * inv;
    }
}

pub fn forward<T: Real>(
    params: &EncoderParams<T>,
    cfg: &EncoderConfig,
    tree: &ComputeTree,
    features: &impl FeatureSource,
    mode: Mode<'_>,
) -> Result<Forward<T>> {
    params.check_shapes()?;
    let dims = params.dims();
    if features.feature_dim() != dims.input {
        return Err(Error::ShapeMismatch("feature width differs from encoder input"));
    }
    let [h1w, h2w] = dims.hidden;
    let mut rng = match mode {
        Mode::Train(rng) if cfg.dropout > 0.0 => Some(rng),
        _ => None,
    };

    let n_nodes = tree.nodes.len();
    let mut x = Matrix::zeros(n_nodes, dims.input);
    for (i, &id) in tree.nodes.iter().enumerate() {
        for (dst, &src) in x.row_mut(i).iter_mut().zip(features.feature_of(id)) {
            *dst = T::lift(src);
        }
    }
    let mask1 = rng
        .as_mut()
        .map(|r| dropout_mask::<T>(n_nodes, dims.input, cfg.dropout, &mut **r));
    if let Some(m) = &mask1 {
        mul_in_place(&mut x, m);
    }

    let mut p_self = Matrix::zeros(n_nodes, h1w);
    let mut p_neigh = Matrix::zeros(n_nodes, h1w);
    for i in 0..n_nodes {
        params.self1.left_mul_acc(x.row(i), p_self.row_mut(i));
        params.neigh1.left_mul_acc(x.row(i), p_neigh.row_mut(i));
    }

    let upper = tree.upper_count();
    let mut a1 = Matrix::zeros(upper, 2 * h1w);
    for p in 0..upper {
        let (node, children) = tree.upper(p);
        let row = a1.row_mut(p);
        let (s, n) = row.split_at_mut(h1w);
        s.copy_from_slice(p_self.row(node as usize));
        mean_rows_into(&p_neigh, children.iter().map(|&c| c as usize), n);
    }
    let mut h1 = a1.map(|v| v.max(T::zero()));
    let mask2 = rng
        .as_mut()
        .map(|r| dropout_mask::<T>(upper, 2 * h1w, cfg.dropout, &mut **r));
    if let Some(m) = &mask2 {
        mul_in_place(&mut h1, m);
    }

    let roots = tree.root_count();
    let mut nbar = Matrix::zeros(roots, 2 * h1w);
    let mut a2 = Matrix::zeros(roots, 2 * h2w);
    for r in 0..roots {
        mean_rows_into(&h1, tree.root_children(r), nbar.row_mut(r));
        let (s, n) = a2.row_mut(r).split_at_mut(h2w);
        params.self2.left_mul_acc(h1.row(r), s);
        params.neigh2.left_mul_acc(nbar.row(r), n);
    }

    let mut z = a2;
    let mut norms = Vec::with_capacity(roots);
    for r in 0..roots {
        let row = z.row_mut(r);
        let nrm = dot(row, row).sqrt();
        norms.push(nrm);
        if cfg.final_l2_normalize && nrm > T::zero() {
            for v in row.iter_mut() {
                *v = *v / nrm;
            }
        }
    }
    if !z.is_finite() {
        return Err(Error::NonFiniteActivation);
    }
    Ok(Forward {
        x,
        mask1,
        a1,
        h1,
        mask2,
        nbar,
        norms,
        z,
    })
}

/// Gradients of a scalar objective with respect to the parameters and,
/// optionally, the input feature of every distinct tree node.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub params: EncoderParams<T>,
    /// Rows follow [`ComputeTree::nodes`].
    pub features: Option<Matrix<T>>,
}

pub fn backward<T: Real>(
    params: &EncoderParams<T>,
    cfg: &EncoderConfig,
    tree: &ComputeTree,
    fwd: &Forward<T>,
    dz: &Matrix<T>,
    with_features: bool,
) -> Result<Gradients<T>> {
    let dims = params.dims();
    let [h1w, h2w] = dims.hidden;
    let roots = tree.root_count();
    if dz.shape() != (roots, 2 * h2w) {
        return Err(Error::ShapeMismatch("output gradient shape"));
    }
    let mut grads = EncoderParams::zeros(dims);

    let upper = tree.upper_count();
    let mut dh1 = Matrix::zeros(upper, 2 * h1w);
    let mut da2 = alloc::vec![T::zero(); 2 * h2w];
    let mut dn = alloc::vec![T::zero(); 2 * h1w];
    for r in 0..roots {
        let g = dz.row(r);
        let nrm = fwd.norms[r];
        if cfg.final_l2_normalize {
            if nrm > T::zero() {
                let z = fwd.z.row(r);
                let zg = dot(z, g);
                for ((d, &gi), &zi) in da2.iter_mut().zip(g).zip(z) {
                    *d = (gi - zi * zg) / nrm;
                }
            } else {
                da2.iter_mut().for_each(|d| *d = T::zero());
            }
        } else {
            da2.copy_from_slice(g);
        }
        let (gs, gn) = da2.split_at(h2w);
        grads.self2.outer_acc(fwd.h1.row(r), gs);
        params.self2.right_mul_acc(gs, dh1.row_mut(r));
        let kids = tree.root_children(r);
        if !kids.is_empty() {
            grads.neigh2.outer_acc(fwd.nbar.row(r), gn);
            dn.iter_mut().for_each(|d| *d = T::zero());
            params.neigh2.right_mul_acc(gn, &mut dn);
            let inv = T::one() / T::from_usize(kids.len()).unwrap();
            for c in kids {
                for (d, &v) in dh1.row_mut(c).iter_mut().zip(&dn) {
                    *d = *d + v * inv;
                }
            }
        }
    }
    if let Some(m) = &fwd.mask2 {
        mul_in_place(&mut dh1, m);
    }
    for (d, &a) in dh1.as_mut_slice().iter_mut().zip(fwd.a1.as_slice()) {
        if a <= T::zero() {
            *d = T::zero();
        }
    }

    let n_nodes = tree.nodes.len();
    let mut dp_self = Matrix::zeros(n_nodes, h1w);
    let mut dp_neigh = Matrix::zeros(n_nodes, h1w);
    for p in 0..upper {
        let (node, children) = tree.upper(p);
        let (ds, dnb) = dh1.row(p).split_at(h1w);
        for (d, &v) in dp_self.row_mut(node as usize).iter_mut().zip(ds) {
            *d = *d + v;
        }
        if !children.is_empty() {
            let inv = T::one() / T::from_usize(children.len()).unwrap();
            for &c in children {
                for (d, &v) in dp_neigh.row_mut(c as usize).iter_mut().zip(dnb) {
                    *d = *d + v * inv;
                }
            }
        }
    }
    for i in 0..n_nodes {
        grads.self1.outer_acc(fwd.x.row(i), dp_self.row(i));
        grads.neigh1.outer_acc(fwd.x.row(i), dp_neigh.row(i));
    }

    let features = with_features.then(|| {
        let mut dx = Matrix::zeros(n_nodes, dims.input);
        for i in 0..n_nodes {
            params.self1.right_mul_acc(dp_self.row(i), dx.row_mut(i));
            params.neigh1.right_mul_acc(dp_neigh.row(i), dx.row_mut(i));
        }
        if let Some(m) = &fwd.mask1 {
            mul_in_place(&mut dx, m);
        }
        dx
    });
    Ok(Gradients {
        params: grads,
        features,
    })
}

/// Single-anchor objective
/// `-log σ(z_u·z_v) - Σ log σ(-z_u·z_n)`.
pub fn pair_loss<T: Real>(z_u: &[T], z_v: &[T], z_neg: &[&[T]]) -> Result<T> {
    let all_finite = |v: &[T]| v.iter().all(|x| x.is_finite());
    if !all_finite(z_u) || !all_finite(z_v) || !z_neg.iter().all(|n| all_finite(n)) {
        return Err(Error::NonFiniteInput);
    }
    if z_v.len() != z_u.len() || z_neg.iter().any(|n| n.len() != z_u.len()) {
        return Err(Error::ShapeMismatch("loss inputs differ in width"));
    }
    let mut j = softplus(-dot(z_u, z_v));
    for n in z_neg {
        j = j + softplus(dot(z_u, n));
    }
    Ok(j)
}

/// Mean objective over `positives` (pairs of root rows), all sharing the
/// negative rows `negatives`. Returns the loss and its gradient with respect
/// to every row of `z`.
pub fn negative_sampling_loss<T: Real>(
    z: &Matrix<T>,
    positives: &[(usize, usize)],
    negatives: &[usize],
) -> Result<(T, Matrix<T>)> {
    if positives.is_empty() {
        return Err(Error::InvalidConfig("loss needs at least one positive pair"));
    }
    if !z.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    let mut dz = Matrix::zeros(z.rows(), z.cols());
    let scale = T::one() / T::from_usize(positives.len()).unwrap();
    let mut total = T::zero();
    let width = z.cols();
    let mut du = alloc::vec![T::zero(); width];
    for &(u, v) in positives {
        du.iter_mut().for_each(|d| *d = T::zero());
        let zu = z.row(u);
        let s = dot(zu, z.row(v));
        total = total + softplus(-s);
        let coef = -sigmoid(-s) * scale;
        for (d, &zv) in du.iter_mut().zip(z.row(v)) {
            *d = *d + coef * zv;
        }
        for (d, &x) in dz.row_mut(v).iter_mut().zip(zu) {
            *d = *d + coef * x;
        }
        for &n in negatives {
            let sn = dot(zu, z.row(n));
            total = total + softplus(sn);
            let coef = sigmoid(sn) * scale;
            for (d, &zn) in du.iter_mut().zip(z.row(n)) {
                *d = *d + coef * zn;
            }
            for (d, &x) in dz.row_mut(n).iter_mut().zip(zu) {
                *d = *d + coef * x;
            }
        }
        for (d, &g) in dz.row_mut(u).iter_mut().zip(&du) {
            *d = *d + g;
        }
    }
    Ok((total * scale, dz))
}
