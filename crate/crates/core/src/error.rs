use thiserror::Error;

/// Broad failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("empty observation sequence")]
    EmptySequence,

    #[error("symbol {symbol} at position {position} is outside an alphabet of {num_symbols} symbols")]
    InvalidSymbol {
        position: usize,
        symbol: usize,
        num_symbols: usize,
    },

    #[error("sequence of length {len} is too short (need at least {required})")]
    SequenceTooShort { len: usize, required: usize },

    #[error("path enumeration over {states}^{len} paths exceeds the brute-force guard")]
    EnumerationTooLarge { states: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("{malformed} of {total} rows malformed (limit {limit_fraction}); first: {first}")]
    TooManyMalformed {
        malformed: usize,
        total: usize,
        limit_fraction: f64,
        first: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no members passed the activity filter")]
    NoMembersPassedFilter,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => ErrorKind::Config,
            Error::Numeric(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
