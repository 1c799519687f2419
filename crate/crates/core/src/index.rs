//! Embedding tables and exact cosine top-k search.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::graph::{NodeId, NodeKind};

/// Node embeddings, one row per node, ordered by ascending `NodeId`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    ids: Vec<NodeId>,
    kinds: Vec<NodeKind>,
    data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ids: Vec::new(),
            kinds: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Append a row. Ids must be strictly increasing.
    pub fn push(&mut self, id: NodeId, kind: NodeKind, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        if self.ids.last().is_some_and(|&last| last >= id) {
            return Err(Error::ShapeMismatch("embedding rows must have increasing ids"));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        self.ids.push(id);
        self.kinds.push(kind);
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: NodeId) -> Option<&[f32]> {
        self.ids.binary_search(&id).ok().map(|i| self.row(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub id: NodeId,
    pub score: f32,
}

/// Brute-force cosine index over unit-normalized rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    dim: usize,
    ids: Vec<NodeId>,
    kinds: Vec<NodeKind>,
    rows: Vec<f32>,
    zero_rows: usize,
}

fn normalized(v: &[f32]) -> Option<Vec<f32>> {
    let n = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    (n > 0.0 && n.is_finite()).then(|| v.iter().map(|&x| (x as f64 / n) as f32).collect())
}

impl EmbeddingIndex {
    pub fn build(table: &EmbeddingTable) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::EmptyTable);
        }
        let mut index = Self {
            dim: table.dim(),
            ids: Vec::with_capacity(table.len()),
            kinds: Vec::with_capacity(table.len()),
            rows: Vec::with_capacity(table.len() * table.dim()),
            zero_rows: 0,
        };
        for i in 0..table.len() {
            match normalized(table.row(i)) {
                Some(row) => {
                    index.ids.push(table.ids()[i]);
                    index.kinds.push(table.kinds()[i]);
                    index.rows.extend_from_slice(&row);
                }
                None => index.zero_rows += 1,
            }
        }
        Ok(index)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Rows dropped at build time for having zero norm.
    pub fn excluded_zero_rows(&self) -> usize {
        self.zero_rows
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// The `k` best cosine matches, by score descending then id ascending.
    pub fn top_k(
        &self,
        query: &[f32],
        k: usize,
        kind_filter: Option<NodeKind>,
        exclude: &BTreeSet<NodeId>,
    ) -> Result<Vec<Hit>> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let q = normalized(query).ok_or(Error::ZeroQuery)?;
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut scored: Vec<Hit> = (0..self.ids.len())
            .filter(|&i| kind_filter.is_none_or(|kf| self.kinds[i] == kf))
            .filter(|&i| !exclude.contains(&self.ids[i]))
            .map(|i| {
                let s: f32 = self.row(i).iter().zip(&q).map(|(a, b)| a * b).sum();
                Hit {
                    id: self.ids[i],
                    score: s.clamp(-1.0, 1.0),
                }
            })
            .collect();
        let order = |a: &Hit, b: &Hit| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then(a.id.cmp(&b.id))
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        Ok(scored)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn table(rows: &[(NodeKind, Vec<f32>)]) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(rows[0].1.len());
        for (i, (k, r)) in rows.iter().enumerate() {
            t.push(NodeId(i as u64), *k, r).unwrap();
        }
        t
    }

    #[test]
    fn build_excludes_zero_rows() {
        let t = table(&[
            (NodeKind::Image, vec![1.0, 0.0]),
            (NodeKind::Image, vec![0.0, 0.0]),
            (NodeKind::Tag, vec![3.0, 4.0]),
        ]);
        let idx = EmbeddingIndex::build(&t).unwrap();
        assert_eq!(idx.len(), 2);
        assert_eq!(idx.excluded_zero_rows(), 1);
        assert_eq!(idx, EmbeddingIndex::build(&t).unwrap());
        assert_eq!(EmbeddingIndex::build(&EmbeddingTable::new(2)), Err(Error::EmptyTable));
    }

    #[test]
    fn self_query_ranks_first_and_ties_by_id() {
        let t = table(&[
            (NodeKind::Image, vec![0.0, 1.0]),
            (NodeKind::Image, vec![1.0, 0.0]),
            (NodeKind::Image, vec![1.0, 0.0]),
            (NodeKind::Tag, vec![0.6, 0.8]),
        ]);
        let idx = EmbeddingIndex::build(&t).unwrap();
        let none = BTreeSet::new();
        let hits = idx.top_k(&[2.0, 0.0], 3, None, &none).unwrap();
        assert_eq!(
            hits[0],
            Hit {
                id: NodeId(1),
                score: 1.0
            }
        );
        assert_eq!(hits[1].id, NodeId(2));
        assert_eq!(hits[2].id, NodeId(3));
        let tags = idx.top_k(&[2.0, 0.0], 5, Some(NodeKind::Tag), &none).unwrap();
        assert_eq!(tags.len(), 1);
        let excl: BTreeSet<NodeId> = [NodeId(1)].into_iter().collect();
        assert_eq!(idx.top_k(&[1.0, 0.0], 1, None, &excl).unwrap()[0].id, NodeId(2));
        assert_eq!(idx.top_k(&[0.0, 0.0], 1, None, &none), Err(Error::ZeroQuery));
    }

    fn brute(t: &EmbeddingTable, q: &[f32], k: usize) -> Vec<NodeId> {
        // Full sort on f64 cosines.
        let qn = q.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let mut all: Vec<(f64, NodeId)> = (0..t.len())
            .map(|i| {
                let r = t.row(i);
                let rn = r.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
                let d: f64 = r.iter().zip(q).map(|(a, b)| *a as f64 * *b as f64).sum();
                (d / (rn * qn), t.ids()[i])
            })
            .collect();
        all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|x| x.1).collect()
    }

    proptest! {
        #[test]
        fn matches_exhaustive_scan(
            rows in proptest::collection::vec(proptest::collection::vec(-1.0f32..1.0, 8), 10),
            q in proptest::collection::vec(-1.0f32..1.0, 8),
            scale in 0.1f32..20.0,
        ) {
            prop_assume!(q.iter().any(|v| v.abs() > 1e-3));
            prop_assume!(rows.iter().all(|r| r.iter().any(|v| v.abs() > 1e-3)));
            let t = table(&rows.iter().map(|r| (NodeKind::Image, r.clone())).collect::<Vec<_>>());
            let idx = EmbeddingIndex::build(&t).unwrap();
            let none = BTreeSet::new();
            let hits = idx.top_k(&q, 3, None, &none).unwrap();
            let got: Vec<NodeId> = hits.iter().map(|h| h.id).collect();
            prop_assert_eq!(got, brute(&t, &q, 3));
            prop_assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
            prop_assert!(hits.iter().all(|h| (-1.0..=1.0).contains(&h.score)));
            let scaled: Vec<f32> = q.iter().map(|v| v * scale).collect();
            let again: Vec<NodeId> = idx.top_k(&scaled, 3, None, &none).unwrap().iter().map(|h| h.id).collect();
            prop_assert_eq!(again, brute(&t, &q, 3));
        }
    }
}
