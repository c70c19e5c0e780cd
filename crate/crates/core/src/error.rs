use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Which of the two samples an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// The first sample, (X, Y) ~ F.
    X,
    /// The second sample, (U, V) ~ G.
    U,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::X => f.write_str("x"),
            Side::U => f.write_str("u"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("the {0} sample is empty")]
    EmptySample(Side),

    #[error("cannot split {size} {side}-points into {folds} folds")]
    InvalidFoldCount { side: Side, folds: usize, size: usize },

    #[error("invalid fold grid: {0}")]
    InvalidFoldGrid(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("nuisance training failed on fold ({s}, {t}): {source}")]
    FoldTraining {
        s: usize,
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("kernel evaluations do not cover the pair grid exactly once: {missing} missing, {duplicated} duplicated")]
    Coverage { missing: usize, duplicated: usize },

    #[error("degenerate variance estimate {0:e}; the kernel projections have no spread")]
    DegenerateVariance(f64),

    #[error("{what} = {value} is outside its domain")]
    Domain { what: &'static str, value: f64 },

    #[error("non-finite score {value} at {side}-point {index}")]
    NonFiniteScore { side: Side, index: usize, value: f64 },

    #[error("labels contain a single class")]
    DegenerateLabels,

    #[error("labels must be exactly 0 or 1, found {0}")]
    InvalidLabel(f64),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("design matrix is rank deficient")]
    Singular,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{component} fit failed: {source}")]
    Component {
        component: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("column `{0}` has no numeric values")]
    NonNumericColumn(String),

    #[error("split column `{0}` takes a single value")]
    DegenerateSplit(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

impl Error {
    pub(crate) fn component(component: &'static str, source: Error) -> Self {
        Error::Component {
            component,
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
