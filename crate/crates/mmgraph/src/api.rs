//! Wire types shared by the HTTP service and the CLI, and their mapping onto
//! the query engine.

use mmgraph_core::ingest::tag_name;
use mmgraph_core::query::{BlendWeights, Connectivity, QuerySpec, DEFAULT_ATTACH_K};
use mmgraph_core::{EdgeKind, Error as CoreError, NodeId, NodeKind};
use serde::{Deserialize, Serialize};

use crate::snapshot::Snapshot;

pub const MAX_K: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConnectivityName {
    #[default]
    ImageOnly,
    TagOnly,
    Both,
}

impl ConnectivityName {
    pub fn to_core(self) -> Connectivity {
        match self {
            ConnectivityName::ImageOnly => Connectivity::ImageOnly { k: DEFAULT_ATTACH_K },
            ConnectivityName::TagOnly => Connectivity::TagOnly,
            ConnectivityName::Both => Connectivity::Both { k: DEFAULT_ATTACH_K },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SearchRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<Vec<f32>>,
    #[serde(default)]
    pub tags: Vec<String>,
    pub visual_weight: f32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connectivity: Option<ConnectivityName>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredKey {
    pub key: String,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveWeights {
    pub w1: f32,
    pub w2: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub results: Vec<ScoredKey>,
    pub dropped_tags: Vec<String>,
    pub effective_weights: EffectiveWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub image_key: String,
    /// Tag names, best first.
    pub tags: Vec<ScoredKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub key: String,
    pub kind: String,
    pub degree: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<String>>,
}

/// Request failure with its HTTP status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: u16,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: 400,
            message: message.into(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self {
            status: 404,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({})", self.message, self.status)
    }
}

impl std::error::Error for ApiError {}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let status = match e {
            CoreError::NoResolvableTags | CoreError::EmptyQuery => 422,
            CoreError::UnknownKey(_) | CoreError::UnknownNode(_) => 404,
            CoreError::DimensionMismatch { .. }
            | CoreError::WeightOutOfRange(_)
            | CoreError::MissingImageFeature
            | CoreError::ZeroQuery
            | CoreError::NonFiniteInput
            | CoreError::NonFiniteFeature
            | CoreError::EmptyAfterNormalization => 400,
            _ => 500,
        };
        Self {
            status,
            message: e.to_string(),
        }
    }
}

fn check_k(k: Option<usize>) -> Result<usize, ApiError> {
    match k.unwrap_or(5) {
        0 => Err(ApiError::bad_request("k must be at least 1")),
        k if k > MAX_K => Err(ApiError::bad_request(format!("k must be at most {MAX_K}"))),
        k => Ok(k),
    }
}

fn image_id(s: &Snapshot, key: &str) -> Result<NodeId, ApiError> {
    match s.graph.node_by_key(key) {
        Some(id) if s.graph.kind(id)? == NodeKind::Image => Ok(id),
        _ => Err(ApiError::not_found(format!("unknown image key {key:?}"))),
    }
}

pub fn search(s: &Snapshot, req: &SearchRequest) -> Result<SearchResponse, ApiError> {
    if !(0.0..=1.0).contains(&req.visual_weight) {
        return Err(ApiError::bad_request("visual_weight must lie in [0, 1]"));
    }
    let blend = BlendWeights::new(req.visual_weight)?;
    let k_results = check_k(req.k)?;
    let base = match (&req.image_key, &req.feature) {
        (Some(_), Some(_)) => return Err(ApiError::bad_request("give image_key or feature, not both")),
        (Some(key), None) => QuerySpec::for_corpus_image(&s.graph, &s.attach, image_id(s, key)?)?,
        (None, Some(f)) => QuerySpec::new().with_feature(f.clone()),
        (None, None) => QuerySpec::new(),
    };
    let spec = QuerySpec {
        tags: req.tags.clone(),
        connectivity: req.connectivity.unwrap_or_default().to_core(),
        blend,
        k_results,
        ..base
    };
    let r = s.engine().retrieve_images(&spec)?;
    Ok(SearchResponse {
        results: r
            .results
            .into_iter()
            .map(|h| ScoredKey {
                key: h.key,
                score: h.score,
            })
            .collect(),
        dropped_tags: r.dropped_tags,
        effective_weights: EffectiveWeights {
            w1: r.effective.w_visual(),
            w2: r.effective.w_concept(),
        },
    })
}

/// Tags for a corpus image, or for a raw feature vector under `label`.
pub fn predict_tags(
    s: &Snapshot,
    image_key: Option<&str>,
    feature: Option<Vec<f32>>,
    k: Option<usize>,
) -> Result<PredictResponse, ApiError> {
    let k = check_k(k)?;
    let (label, spec) = match (image_key, feature) {
        (Some(key), None) => (
            key.to_string(),
            QuerySpec::for_corpus_image(&s.graph, &s.attach, image_id(s, key)?)?,
        ),
        (None, Some(f)) => (String::new(), QuerySpec::new().with_feature(f)),
        _ => return Err(ApiError::bad_request("give exactly one of image_key or feature")),
    };
    let hits = s.engine().predict_tags(&spec, k)?;
    Ok(PredictResponse {
        image_key: label,
        tags: hits
            .into_iter()
            .map(|h| ScoredKey {
                key: tag_name(&h.key).to_string(),
                score: h.score,
            })
            .collect(),
    })
}

pub fn node_info(s: &Snapshot, key: &str) -> Result<NodeInfo, ApiError> {
    let id = s
        .graph
        .node_by_key(key)
        .ok_or_else(|| ApiError::not_found(format!("unknown node key {key:?}")))?;
    let kind = s.graph.kind(id)?;
    let tags = match kind {
        NodeKind::Image => Some(
            s.graph
                .neighbors(id, Some(EdgeKind::ImageTag))?
                .into_iter()
                .map(|t| s.graph.key(t).map(|k| tag_name(k).to_string()))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        NodeKind::Tag => None,
    };
    Ok(NodeInfo {
        key: key.to_string(),
        kind: kind.as_str().to_string(),
        degree: s.graph.degree(id)?,
        tags,
    })
}
