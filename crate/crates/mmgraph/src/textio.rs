//! Text formats: image JSON Lines, pair dumps, loss curves, judgments and
//! evaluation reports.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use anyhow::{bail, Context, Result};
use mmgraph_core::eval::{EvalJudgment, EvalReport, GainScheme, RelevanceLabel};
use mmgraph_core::ingest::ImageRecord;
use mmgraph_core::sampler::PositivePair;
use mmgraph_core::MultiModalGraph;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageLine {
    pub key: String,
    pub init_feature: Vec<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_feature: Option<Vec<f32>>,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl From<ImageLine> for ImageRecord {
    fn from(l: ImageLine) -> Self {
        ImageRecord {
            key: l.key,
            init_feature: l.init_feature,
            sim_feature: l.sim_feature,
            tags: l.tags,
        }
    }
}

impl From<&ImageRecord> for ImageLine {
    fn from(r: &ImageRecord) -> Self {
        ImageLine {
            key: r.key.clone(),
            init_feature: r.init_feature.clone(),
            sim_feature: r.sim_feature.clone(),
            tags: r.tags.clone(),
        }
    }
}

/// Parse one image per non-blank line.
pub fn read_images(input: impl BufRead) -> Result<Vec<ImageRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ImageLine = serde_json::from_str(&line).with_context(|| format!("images line {}", i + 1))?;
        out.push(rec.into());
    }
    Ok(out)
}

pub fn write_images(mut out: impl Write, records: &[ImageRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, &ImageLine::from(r))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PairLine<'a> {
    u: &'a str,
    v: &'a str,
}

pub fn write_pairs(mut out: impl Write, g: &MultiModalGraph, pairs: &[PositivePair]) -> Result<()> {
    for p in pairs {
        serde_json::to_writer(
            &mut out,
            &PairLine {
                u: g.key(p.u)?,
                v: g.key(p.v)?,
            },
        )?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_loss_csv(out: impl Write, losses: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "mean_loss"])?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct JudgmentRow {
    query_id: String,
    rank: usize,
    label: String,
}

pub fn read_judgments(input: impl Read) -> Result<Vec<EvalJudgment>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["query_id", "rank", "label"] {
        bail!("judgments header must be query_id,rank,label");
    }
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<JudgmentRow>().enumerate() {
        let row = row.with_context(|| format!("judgments row {}", i + 1))?;
        let label = RelevanceLabel::parse(&row.label)
            .with_context(|| format!("judgments row {}: unknown label {:?}", i + 1, row.label))?;
        out.push(EvalJudgment {
            query_id: row.query_id,
            rank: row.rank,
            label,
        });
    }
    Ok(out)
}

pub fn write_judgments(out: impl Write, judgments: &[EvalJudgment]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["query_id", "rank", "label"])?;
    for j in judgments {
        w.write_record([j.query_id.as_str(), &j.rank.to_string(), j.label.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct QueryReport {
    pub query_id: String,
    pub ndcg: BTreeMap<String, f64>,
}

/// JSON evaluation report; maps are keyed by label name or cutoff.
#[derive(Debug, Serialize)]
pub struct ReportJson {
    pub gain_scheme: &'static str,
    pub gains: BTreeMap<&'static str, f64>,
    pub counts: BTreeMap<&'static str, usize>,
    pub percentages: BTreeMap<&'static str, u32>,
    pub ndcg: BTreeMap<String, f64>,
    pub per_query: Vec<QueryReport>,
}

impl From<&EvalReport> for ReportJson {
    fn from(r: &EvalReport) -> Self {
        let labels = RelevanceLabel::ALL;
        ReportJson {
            gain_scheme: match r.scheme {
                GainScheme::Exponential => "exponential",
                GainScheme::Linear => "linear",
            },
            gains: labels.iter().map(|&l| (l.as_str(), r.scheme.gain(l))).collect(),
            counts: labels.iter().map(|&l| (l.as_str(), r.distribution.count(l))).collect(),
            percentages: labels
                .iter()
                .map(|&l| (l.as_str(), r.distribution.percent(l)))
                .collect(),
            ndcg: r.mean_ndcg.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            per_query: r
                .per_query
                .iter()
                .map(|q| QueryReport {
                    query_id: q.query_id.clone(),
                    ndcg: q.ndcg.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
                })
                .collect(),
        }
    }
}
