use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("degenerate geometry: cluster at distance {distance} m is within ring radius {ring_radius} m")]
    DegenerateGeometry { distance: f64, ring_radius: f64 },

    #[error("invalid angle spread {spread} rad (need 0 <= spread < pi/2)")]
    InvalidSpread { spread: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("infeasible null space: need {needed} dimensions, only {available} left")]
    InfeasibleNullSpace { needed: usize, available: usize },

    #[error("effective channel is rank deficient (condition {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("cluster {cluster} has no feasible base station")]
    NoFeasibleBs { cluster: usize },

    #[error("exhaustive search needs {count} evaluations, limit is {limit}")]
    EnumerationTooLarge { count: u128, limit: u128 },

    #[error("empty input")]
    EmptyInput,

    #[error("at bs {bs}, cluster {cluster}: {source}")]
    AtPair {
        bs: usize,
        cluster: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn at(self, bs: usize, cluster: usize) -> Self {
        Error::AtPair {
            bs,
            cluster,
            source: Box::new(self),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Stable short name used in the failed-drop log.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig { .. } => "InvalidConfig",
            Error::DegenerateGeometry { .. } => "DegenerateGeometry",
            Error::InvalidSpread { .. } => "InvalidSpread",
            Error::NumericalFailure(_) => "NumericalFailure",
            Error::InfeasibleNullSpace { .. } => "InfeasibleNullSpace",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::NoFeasibleBs { .. } => "NoFeasibleBS",
            Error::EnumerationTooLarge { .. } => "EnumerationTooLarge",
            Error::EmptyInput => "EmptyInput",
            Error::AtPair { source, .. } => source.kind(),
            Error::Io { .. } => "Io",
            Error::Parse(_) => "Parse",
        }
    }
}
