use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the index pipeline can report.
///
/// Numeric payloads are widened to `f64` so the type stays independent of the
/// scalar the computation ran in.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    // -- index math --
    #[error("value {0} is not finite")]
    NonFiniteInput(f64),
    #[error("value {0} is outside the unit interval")]
    NotUnitInterval(f64),
    #[error("value {value} is outside normalization bounds [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },
    #[error("normalization bounds [{min}, {max}] are degenerate")]
    DegenerateBounds { min: f64, max: f64 },
    #[error("weight vector is empty")]
    EmptyWeights,
    #[error("weight for `{id}` is negative ({weight})")]
    NegativeWeight { id: String, weight: f64 },
    #[error("weights sum to {sum}, expected 1 within {tolerance}")]
    WeightSumViolation { sum: f64, tolerance: f64 },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("ids do not match: {0}")]
    IdMismatch(String),

    // -- indicator calculators --
    #[error("share vector is empty")]
    EmptyShares,
    #[error("share for `{entity}` is {share}, expected a fraction in [0, 1]")]
    InvalidShare { entity: String, share: f64 },
    #[error("shares sum to {0}, exceeding 1")]
    ShareSumExceeded(f64),
    #[error("listed shares cover {coverage}, below the required {floor}")]
    ResidualTooLarge { coverage: f64, floor: f64 },
    #[error("volume list is empty")]
    EmptyList,
    #[error("volume for `{entity}` is negative ({volume})")]
    NegativeVolume { entity: String, volume: f64 },
    #[error("total volume is zero")]
    ZeroTotalVolume,
    #[error("top-k share needs k >= 1")]
    InvalidK,
    #[error("series has no value for {0}")]
    MissingPeriod(String),
    #[error("series has no value for {0}, the predecessor needed for a growth rate")]
    MissingPredecessor(String),
    #[error("growth base for {0} is not positive")]
    NonPositiveBase(String),
    #[error("deceleration at {0} needs the two preceding periods")]
    InsufficientHistory(String),
    #[error("prior growth rate at {0} is not positive; deceleration undefined")]
    NonPositivePriorGrowth(String),
    #[error("component kind `{kind}` cannot use {found} data")]
    ShapeMismatch { kind: String, found: String },
    #[error("period {0} appears more than once")]
    DuplicatePeriod(String),
    #[error("series mixes annual and quarterly periods")]
    MixedGranularity,

    // -- ingestion --
    #[error("invalid period `{0}` (expected YYYY or YYYY-Qn)")]
    InvalidPeriod(String),
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("schema violation at `{path}`: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("CSV header mismatch: found `{0}`")]
    HeaderMismatch(String),
    #[error("line {line}, column {column}: {reason}")]
    RowParse {
        line: u64,
        column: String,
        reason: String,
    },
    #[error("{} row error(s): {}", .0.len(), .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Rows(Vec<Error>),
    #[error("component `{0}` needs at least two observed values for empirical bounds")]
    InsufficientData(String),

    // -- computation --
    #[error("component `{component}` has no usable data for {period}: {reason}")]
    MissingComponent {
        component: String,
        period: String,
        reason: String,
    },
    #[error("no data for period {0}")]
    NoData(String),
    #[error("unknown id `{0}`")]
    UnknownId(String),

    // -- sensitivity --
    #[error("dimension must be at least 1")]
    InvalidDimension,
    #[error("concentration must be positive and finite, got {0}")]
    InvalidConcentration(f64),
    #[error("delta must lie in (0, 1], got {0}")]
    DeltaOutOfRange(f64),
    #[error("sample count {count} outside [1, {cap}]")]
    InvalidSampleCount { count: u64, cap: u64 },

    #[error("{path}: {source}")]
    At { path: String, source: Box<Error> },
}

impl Error {
    /// Attach a field path (e.g. `weight_overrides.top`) to an error.
    pub fn at(self, path: impl Into<String>) -> Error {
        let path = path.into();
        match self {
            Error::At {
                path: inner,
                source,
            } => Error::At {
                path: format!("{path}.{inner}"),
                source,
            },
            Error::SchemaViolation {
                path: inner,
                message,
            } => Error::SchemaViolation {
                path: format!("{path}.{inner}"),
                message,
            },
            e => Error::At {
                path,
                source: Box::new(e),
            },
        }
    }

    pub fn path(&self) -> Option<&str> {
        match self {
            Error::At { path, .. } => Some(path),
            Error::SchemaViolation { path, .. } => Some(path),
            _ => None,
        }
    }

    /// Innermost error, with any path context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::At { source, .. } => source.root(),
            e => e,
        }
    }

    /// Stable machine-readable name, used in service error bodies.
    pub fn code(&self) -> &'static str {
        match self.root() {
            Error::NonFiniteInput(_) => "NonFiniteInput",
            Error::NotUnitInterval(_) => "NotUnitInterval",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::DegenerateBounds { .. } => "DegenerateBounds",
            Error::EmptyWeights => "EmptyWeights",
            Error::NegativeWeight { .. } => "NegativeWeight",
            Error::WeightSumViolation { .. } => "WeightSumViolation",
            Error::DuplicateId(_) => "DuplicateId",
            Error::IdMismatch(_) => "IdMismatch",
            Error::EmptyShares => "EmptyShares",
            Error::InvalidShare { .. } => "InvalidShare",
            Error::ShareSumExceeded(_) => "ShareSumExceeded",
            Error::ResidualTooLarge { .. } => "ResidualTooLarge",
            Error::EmptyList => "EmptyList",
            Error::NegativeVolume { .. } => "NegativeVolume",
            Error::ZeroTotalVolume => "ZeroTotalVolume",
            Error::InvalidK => "InvalidK",
            Error::MissingPeriod(_) => "MissingPeriod",
            Error::MissingPredecessor(_) => "MissingPredecessor",
            Error::NonPositiveBase(_) => "NonPositiveBase",
            Error::InsufficientHistory(_) => "InsufficientHistory",
            Error::NonPositivePriorGrowth(_) => "NonPositivePriorGrowth",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::DuplicatePeriod(_) => "DuplicatePeriod",
            Error::MixedGranularity => "MixedGranularity",
            Error::InvalidPeriod(_) => "InvalidPeriod",
            Error::Syntax(_) => "SyntaxError",
            Error::SchemaViolation { .. } => "SchemaViolation",
            Error::HeaderMismatch(_) => "HeaderMismatch",
            Error::RowParse { .. } => "RowParseError",
            Error::Rows(_) => "RowParseError",
            Error::InsufficientData(_) => "InsufficientData",
            Error::MissingComponent { .. } => "MissingComponent",
            Error::NoData(_) => "NoData",
            Error::UnknownId(_) => "UnknownId",
            Error::InvalidDimension => "InvalidDimension",
            Error::InvalidConcentration(_) => "InvalidConcentration",
            Error::DeltaOutOfRange(_) => "DeltaOutOfRange",
            Error::InvalidSampleCount { .. } => "InvalidSampleCount",
            Error::At { .. } => unreachable!("root() strips path context"),
        }
    }
}
