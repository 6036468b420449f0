use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index set is empty")]
    EmptyIndexSet,

    #[error("l0 ball of radius {radius} in {dim} dimensions is unbounded without a degree cap")]
    UnboundedIndexSet { dim: usize, radius: f64 },

    #[error("index set is not downward closed")]
    NotDownwardClosed,

    #[error("degenerate measure: {0}")]
    DegenerateMeasure(String),

    #[error("eigenvalue solver did not converge")]
    EigenFailure,

    #[error("polynomial degree {requested} exceeds the {available} recurrence coefficients available")]
    DegreeOverflow { requested: usize, available: usize },

    #[error("degenerate box: zero or negative width in coordinate {0}")]
    DegenerateBox(usize),

    #[error("unbounded domain: {0}")]
    UnboundedDomain(String),

    #[error("rejection sampling acceptance rate {rate:.3e} after {attempts} proposals is below 1e-4")]
    RejectionSampling { rate: f64, attempts: usize },

    #[error("matrix has rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("point {index} lies outside the domain")]
    OutsideDomain { index: usize },

    #[error("multinomial expansion too large: total degree {degree} exceeds {limit}")]
    ExpansionTooLarge { degree: u32, limit: u32 },

    #[error("diagonal rule requires identical univariate factors")]
    NonIdenticalFactors,

    #[error("sign-flipped diagonal rule requires a symmetric univariate measure")]
    AsymmetricMeasure,

    #[error("unsupported degree {0}")]
    UnsupportedDegree(u32),

    #[error("sobol direction numbers: {0}")]
    SobolDirections(String),

    #[error("ode solver failed: {0}")]
    OdeFailure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
