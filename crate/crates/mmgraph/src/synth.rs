//! Synthetic two-cluster corpora for smoke tests and demos.

use mmgraph_core::ingest::ImageRecord;
use mmgraph_core::rng::rng_for;
use rand_distr::{Distribution, Normal};

const SYNTH_STREAM: u64 = 0x5157;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoClusters {
    pub per_cluster: usize,
    pub dim: usize,
    /// Per-coordinate offset of each cluster center, in units of sigma.
    /// Cluster A is offset on the first half of the coordinates, B on the
    /// second half.
    pub offset: f32,
    pub sigma: f32,
    pub seed: u64,
}

impl Default for TwoClusters {
    fn default() -> Self {
        Self {
            per_cluster: 30,
            dim: 512,
            offset: 3.0,
            sigma: 1.0,
            seed: 0,
        }
    }
}

impl TwoClusters {
    /// Distance between the two centers in units of sigma.
    pub fn separation(&self) -> f32 {
        self.offset * (self.dim as f32).sqrt()
    }

    pub fn center(&self, cluster: usize) -> Vec<f32> {
        let half = self.dim / 2;
        (0..self.dim)
            .map(|j| {
                let in_a = j < half;
                if in_a == (cluster == 0) {
                    self.offset * self.sigma
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn sample(&self, cluster: usize, rng: &mut impl rand::Rng) -> Vec<f32> {
        let noise = Normal::new(0.0f32, self.sigma).expect("sigma is positive");
        self.center(cluster)
            .into_iter()
            .map(|c| c + noise.sample(rng))
            .collect()
    }

    /// Images `a00..` tagged "alpha" followed by `b00..` tagged "beta".
    pub fn generate(&self) -> Vec<ImageRecord> {
        let mut rng = rng_for(self.seed, SYNTH_STREAM);
        let mut out = Vec::with_capacity(2 * self.per_cluster);
        for (cluster, (prefix, tag)) in [("a", "alpha"), ("b", "beta")].into_iter().enumerate() {
            for i in 0..self.per_cluster {
                let f = self.sample(cluster, &mut rng);
                out.push(ImageRecord::new(&format!("{prefix}{i:02}"), f, &[tag]));
            }
        }
        out
    }
}

/// Cluster index (0 = A, 1 = B) encoded in a synthetic image key.
pub fn cluster_of(key: &str) -> Option<usize> {
    match key.as_bytes().first() {
        Some(b'a') => Some(0),
        Some(b'b') => Some(1),
        _ => None,
    }
}
