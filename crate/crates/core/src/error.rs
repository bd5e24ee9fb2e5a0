use std::fmt;

use thiserror::Error;

/// Where in a network a degenerate signal was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignalLocation {
    /// 1-based layer index receiving the signal.
    pub layer: usize,
    /// 0-based index of the incoming signal (input column or previous-layer node).
    pub signal: usize,
}

impl fmt::Display for SignalLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layer {} signal {}", self.layer, self.signal)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample set is empty")]
    EmptySample,

    #[error("non-finite value in input: {0}")]
    NonFiniteInput(String),

    #[error("Hankel matrix of moments is not positive definite beyond degree {max_feasible_degree}{}",
        .location.map(|l| format!(" ({l})")).unwrap_or_default())]
    MomentDegeneracy {
        max_feasible_degree: usize,
        location: Option<SignalLocation>,
    },

    #[error("degree {requested} out of range (basis degree {available})")]
    DegreeOutOfRange { requested: usize, available: usize },

    #[error("polynomial has non-real roots (imaginary part {imag:e})")]
    NonRealRoots { imag: f64 },

    #[error("basis with {requested} terms exceeds the cap of {cap}")]
    BasisTooLarge { requested: String, cap: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("normalized activation needs statistics with positive std")]
    MissingNormalizationStats,

    #[error("bases have not been refreshed on training data")]
    BasesNotRefreshed,

    #[error("node response has zero variance")]
    DegenerateNode,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("Levenberg-Marquardt stalled: {reason}")]
    LmStall {
        reason: String,
        best: Box<crate::network::NetworkState>,
    },

    #[error("sampling dimension {0} is not supported (max 20)")]
    DimensionUnsupported(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("model declares {found} weights for layer {layer} node {node}, expected {expected}")]
    WeightCountMismatch {
        layer: usize,
        node: usize,
        expected: usize,
        found: usize,
    },

    #[error("unsupported schema version {0}")]
    UnsupportedSchema(u32),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable identifier of the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptySample => "empty-sample",
            Error::NonFiniteInput(_) => "non-finite-input",
            Error::MomentDegeneracy { .. } => "moment-degeneracy",
            Error::DegreeOutOfRange { .. } => "degree-out-of-range",
            Error::NonRealRoots { .. } => "non-real-roots",
            Error::BasisTooLarge { .. } => "basis-too-large",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::InvalidArchitecture(_) => "invalid-architecture",
            Error::MissingNormalizationStats => "missing-normalization-stats",
            Error::BasesNotRefreshed => "bases-not-refreshed",
            Error::DegenerateNode => "degenerate-node",
            Error::EmptyDataset => "empty-dataset",
            Error::InvalidConfig(_) => "invalid-config",
            Error::LmStall { .. } => "lm-stall",
            Error::DimensionUnsupported(_) => "dimension-unsupported",
            Error::Parse(_) => "parse-error",
            Error::WeightCountMismatch { .. } => "weight-count-mismatch",
            Error::UnsupportedSchema(_) => "unsupported-schema",
            Error::Io(_) => "io-error",
            Error::Json(_) => "json-error",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
