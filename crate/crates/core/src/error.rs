use thiserror::Error;

/// Errors produced by the mixture-law toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("weight {index} is negative ({value})")]
    NegativeWeight { index: usize, value: f64 },

    #[error("weights do not have a positive finite sum")]
    DegenerateSum,

    #[error("a mixture needs at least 2 entries, got {0}")]
    TooFewEntries(usize),

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("factor {factor} is infeasible for entry {value}")]
    InfeasibleFactor { factor: f64, value: f64 },

    #[error("entry {0} already holds the full mass; nothing left to renormalize")]
    DegenerateMixture(usize),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },

    #[error("invalid domain profile: {0}")]
    InvalidProfile(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("intrinsic domain {domain} has zero effective weight")]
    ZeroEffectiveWeight { domain: usize },

    #[error("root finding did not converge: {0}")]
    NonConvergence(String),

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("run {index} has no value for target `{target}`")]
    MissingTarget { index: usize, target: String },

    #[error("runs span several scales ({0} and {1}); expected a single scale")]
    MixedScales(f64, f64),

    #[error("need at least {need} fitted scales, got {found}")]
    TooFewScales { need: usize, found: usize },

    #[error("benchmark `{0}` is missing")]
    MissingBenchmark(String),

    #[error("run {index} has loss keys that differ from the first run")]
    InconsistentLossKeys { index: usize },

    #[error("observation {index} is zero; relative error is undefined")]
    ZeroObservation { index: usize },

    #[error("no scales supplied")]
    EmptyScales,

    #[error("scales must be sorted by parameter count, ascending")]
    UnsortedScales,

    #[error("scale {scale} has {have} pooled runs but {need} were requested")]
    PoolTooSmall { scale: String, need: usize, have: usize },

    #[error("lattice too large: n = {n}, resolution = {resolution}")]
    LatticeTooLarge { n: usize, resolution: f64 },

    #[error("{0} must be positive")]
    NonPositive(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unsupported schema version {0}")]
    SchemaVersion(u32),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
