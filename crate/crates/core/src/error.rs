use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} = {value} is outside the supported range {range}")]
    OutOfRange {
        what: &'static str,
        value: i64,
        range: String,
    },

    #[error("label {label} is not a vertex of a tree on {n} vertices")]
    LabelOutOfRange { label: usize, n: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("non-finite integrand value {value} at stream {stream}, sample {sample}")]
    NonFinite { value: f64, stream: u64, sample: u64 },

    #[error("negative edge density {density} at radius {radius}")]
    NegativeDensity { radius: f64, density: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("potential error: {0}")]
    Potential(String),

    #[error("missing derivative evaluator for forest {forest:?} with roots {roots:?}")]
    MissingDerivative {
        forest: Vec<(usize, usize)>,
        roots: Vec<usize>,
    },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("self-check failed: {0}")]
    SelfCheck(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn out_of_range(what: &'static str, value: usize, range: impl Into<String>) -> Error {
    Error::OutOfRange {
        what,
        value: value as i64,
        range: range.into(),
    }
}
