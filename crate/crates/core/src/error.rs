use alloc::string::String;

/// Errors raised by the engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("duplicate node key `{0}`")]
    DuplicateKey(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("feature vector contains a non-finite value")]
    NonFiniteFeature,
    #[error("self-loop on node {0}")]
    SelfLoop(u64),
    #[error("edge kind does not match the kinds of its endpoints ({0} - {1})")]
    KindMismatch(u64, u64),
    #[error("duplicate edge {0} - {1}")]
    DuplicateEdge(u64, u64),
    #[error("unknown node {0}")]
    UnknownNode(u64),
    #[error("unknown node key `{0}`")]
    UnknownKey(String),
    #[error("tag is empty after normalization")]
    EmptyAfterNormalization,
    #[error("similarity vector of `{0}` has zero norm")]
    ZeroVector(String),
    #[error("no input records")]
    EmptyInput,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("non-finite activation")]
    NonFiniteActivation,
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("graph cannot produce training pairs")]
    DegenerateGraph,
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("embedding table is empty")]
    EmptyTable,
    #[error("query vector is zero")]
    ZeroQuery,
    #[error("none of the query tags are known")]
    NoResolvableTags,
    #[error("query has neither an image nor tags")]
    EmptyQuery,
    #[error("query needs an image feature for this connectivity")]
    MissingImageFeature,
    #[error("weight {0} is outside [0, 1]")]
    WeightOutOfRange(f32),
    #[error("query `{0}` is missing ranks")]
    MissingRanks(String),
    #[error("no queries to evaluate")]
    NoQueries,
}

pub type Result<T> = core::result::Result<T, Error>;
