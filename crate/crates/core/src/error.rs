use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function it was passed to.
    #[error("domain error: {what} (got {value})")]
    Domain { what: &'static str, value: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// The regularized Gram matrix cannot be solved reliably.
    #[error(
        "singular Gram system: reciprocal condition estimate {rcond:.3e} \
         (k = {k}, sigma2 = {sigma2}); use distinct centers or sigma2 > 0"
    )]
    Singular { rcond: f64, k: usize, sigma2: f64 },

    /// Layer `layer` produces `outputs` columns but layer `layer + 1` expects `next_inputs`.
    #[error(
        "cannot compose layer {layer} ({outputs} outputs) with layer {} ({next_inputs} inputs)",
        layer + 1
    )]
    Composition {
        layer: usize,
        outputs: usize,
        next_inputs: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{0}: no rows")]
    Empty(&'static str),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("invalid model file: {0}")]
    Model(String),

    #[error("unsupported model format_version {0}")]
    UnsupportedVersion(u32),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl ToString,
        got: impl ToString,
    ) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
