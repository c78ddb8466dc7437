use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate (constant) series: {name}")]
    Degenerate { name: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{name}: need at least {min} values, got {got}")]
    TooFewValues { name: String, got: usize, min: usize },

    #[error("{name}: non-finite value at region {region}")]
    NonFinite { name: String, region: String },

    #[error("{name}: negative count at region {region}")]
    NegativeCount { name: String, region: String },

    #[error("{name}: no women_15_50 denominator for region {region}")]
    MissingDenominator { name: String, region: String },

    #[error("{name}: zero women_15_50 denominator for region {region}")]
    ZeroDenominator { name: String, region: String },

    #[error("region mismatch ({context}): only in left {only_left:?}, only in right {only_right:?}")]
    RegionMismatch {
        context: String,
        only_left: Vec<String>,
        only_right: Vec<String>,
    },

    #[error("duplicate term: {0}")]
    DuplicateTerm(String),

    #[error("duplicate region: {0}")]
    DuplicateRegion(String),

    #[error("singular design; linearly dependent columns: {columns:?}")]
    SingularDesign { columns: Vec<String> },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("missing column: {0}")]
    MissingColumn(String),

    #[error("coordinate descent did not converge after {sweeps} sweeps (last max change {max_change:e}, threshold {threshold:e})")]
    NoConvergence {
        sweeps: usize,
        max_change: f64,
        threshold: f64,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("fold holding out {region}: {source}")]
    Fold {
        region: String,
        #[source]
        source: Box<Error>,
    },

    #[error("term {term}: year {year} incomplete, missing months {missing:?}")]
    IncompleteYear {
        term: String,
        year: i32,
        missing: Vec<u32>,
    },

    #[error("term {term}: no samples for year {year}")]
    MissingYear { term: String, year: i32 },

    #[error("cannot rescale series with non-positive maximum {max}")]
    NonPositiveMax { max: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn degenerate(name: impl Into<String>) -> Self {
        Error::Degenerate { name: name.into() }
    }

    pub(crate) fn parse(path: &std::path::Path, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
