//! Graded-relevance evaluation: NDCG@k and label distributions.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelevanceLabel {
    Unacceptable,
    Acceptable,
    Good,
    Excellent,
}

impl RelevanceLabel {
    pub const ALL: [RelevanceLabel; 4] = [
        RelevanceLabel::Excellent,
        RelevanceLabel::Good,
        RelevanceLabel::Acceptable,
        RelevanceLabel::Unacceptable,
    ];

    /// Integer grade: Excellent 3, Good 2, Acceptable 1, Unacceptable 0.
    pub fn grade(self) -> u8 {
        match self {
            RelevanceLabel::Unacceptable => 0,
            RelevanceLabel::Acceptable => 1,
            RelevanceLabel::Good => 2,
            RelevanceLabel::Excellent => 3,
        }
    }

    pub fn from_grade(g: u8) -> Option<Self> {
        Some(match g {
            0 => RelevanceLabel::Unacceptable,
            1 => RelevanceLabel::Acceptable,
            2 => RelevanceLabel::Good,
            3 => RelevanceLabel::Excellent,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelevanceLabel::Unacceptable => "unacceptable",
            RelevanceLabel::Acceptable => "acceptable",
            RelevanceLabel::Good => "good",
            RelevanceLabel::Excellent => "excellent",
        }
    }

    /// Accepts the lowercase name or the integer grade.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .or_else(|| s.parse::<u8>().ok().and_then(Self::from_grade))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainScheme {
    /// `2^grade - 1`
    #[default]
    Exponential,
    /// `grade`
    Linear,
}

impl GainScheme {
    pub fn gain(self, label: RelevanceLabel) -> f64 {
        let g = label.grade();
        match self {
            GainScheme::Exponential => ((1u32 << g) - 1) as f64,
            GainScheme::Linear => g as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalJudgment {
    pub query_id: String,
    /// 1-based.
    pub rank: usize,
    pub label: RelevanceLabel,
}

fn dcg(labels: &[RelevanceLabel], scheme: GainScheme) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| scheme.gain(l) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@k of one ranked list. Ranks beyond `labels.len()` count as absent;
/// the ideal ordering is built from the same labels. Zero when nothing is
/// relevant.
pub fn ndcg_at_k(labels: &[RelevanceLabel], k: usize, scheme: GainScheme) -> f64 {
    let top = &labels[..k.min(labels.len())];
    let mut ideal = labels.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    ideal.truncate(k);
    let idcg = dcg(&ideal, scheme);
    if idcg == 0.0 {
        0.0
    } else {
        dcg(top, scheme) / idcg
    }
}

/// Judgments of one query ordered by rank; ranks must be exactly `1..=n`.
fn ranked_labels(query: &str, judgments: &[&EvalJudgment]) -> Result<Vec<RelevanceLabel>> {
    let mut by_rank: BTreeMap<usize, RelevanceLabel> = BTreeMap::new();
    for j in judgments {
        if j.rank == 0 || by_rank.insert(j.rank, j.label).is_some() {
            return Err(Error::MissingRanks(query.into()));
        }
    }
    if by_rank.keys().enumerate().any(|(i, &r)| r != i + 1) {
        return Err(Error::MissingRanks(query.into()));
    }
    Ok(by_rank.into_values().collect())
}

/// NDCG@p of one query's judgments. Ranks must run `1..=n` with `n >= p`.
pub fn ndcg_at(judgments: &[EvalJudgment], p: usize, scheme: GainScheme) -> Result<f64> {
    let query = judgments.first().map_or("", |j| j.query_id.as_str());
    let refs: Vec<&EvalJudgment> = judgments.iter().collect();
    let labels = ranked_labels(query, &refs)?;
    if labels.len() < p {
        return Err(Error::MissingRanks(query.into()));
    }
    Ok(ndcg_at_k(&labels, p, scheme))
}

/// Unweighted mean of [`ndcg_at`] over queries.
pub fn mean_ndcg(judgments: &[EvalJudgment], p: usize, scheme: GainScheme) -> Result<f64> {
    Ok(evaluate(judgments, &[p], scheme)?.mean_ndcg[0].1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryScore {
    pub query_id: String,
    /// `(k, ndcg)` per requested cutoff.
    pub ndcg: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub scheme: GainScheme,
    /// `(k, mean ndcg)` per requested cutoff.
    pub mean_ndcg: Vec<(usize, f64)>,
    pub per_query: Vec<QueryScore>,
    pub distribution: LabelDistribution,
}

/// Score every query at each cutoff and average, queries in name order.
pub fn evaluate(judgments: &[EvalJudgment], cutoffs: &[usize], scheme: GainScheme) -> Result<EvalReport> {
    let mut grouped: BTreeMap<&str, Vec<&EvalJudgment>> = BTreeMap::new();
    for j in judgments {
        grouped.entry(j.query_id.as_str()).or_default().push(j);
    }
    if grouped.is_empty() {
        return Err(Error::NoQueries);
    }
    let mut per_query = Vec::with_capacity(grouped.len());
    for (q, js) in &grouped {
        let labels = ranked_labels(q, js)?;
        if cutoffs.iter().any(|&k| labels.len() < k) {
            return Err(Error::MissingRanks(String::from(*q)));
        }
        per_query.push(QueryScore {
            query_id: String::from(*q),
            ndcg: cutoffs.iter().map(|&k| (k, ndcg_at_k(&labels, k, scheme))).collect(),
        });
    }
    let n = per_query.len() as f64;
    let mean_ndcg = cutoffs
        .iter()
        .enumerate()
        .map(|(i, &k)| (k, per_query.iter().map(|s| s.ndcg[i].1).sum::<f64>() / n))
        .collect();
    Ok(EvalReport {
        scheme,
        mean_ndcg,
        per_query,
        distribution: label_distribution(judgments.iter().map(|j| j.label)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LabelDistribution {
    /// Counts indexed by grade.
    pub counts: [usize; 4],
}

impl LabelDistribution {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn count(&self, l: RelevanceLabel) -> usize {
        self.counts[l.grade() as usize]
    }

    /// Whole percentage of `l`, rounding halves up. Zero on an empty set.
    pub fn percent(&self, l: RelevanceLabel) -> u32 {
        let total = self.total();
        if total == 0 {
            return 0;
        }
        ((200 * self.count(l) + total) / (2 * total)) as u32
    }
}

pub fn label_distribution(labels: impl IntoIterator<Item = RelevanceLabel>) -> LabelDistribution {
    let mut d = LabelDistribution::default();
    for l in labels {
        d.counts[l.grade() as usize] += 1;
    }
    d
}
