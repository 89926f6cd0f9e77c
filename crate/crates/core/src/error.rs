use crate::propagation::PathStats;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid Pauli text {text:?}: {reason}")]
    PauliParse { text: String, reason: String },

    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("mode mismatch: {0}")]
    Mode(String),

    #[error("path cap of {cap} entries exceeded ({stats})")]
    Overflow { cap: usize, stats: Box<PathStats> },

    #[error("dense oracle limited to {cap} qubits, requested {n}")]
    OracleCap { n: usize, cap: usize },

    #[error("state is not normalized: |psi|^2 = {norm_sq}")]
    Unnormalized { norm_sq: f64 },

    #[error("{formula}: hypothesis violated, requires {condition}")]
    Hypothesis {
        formula: &'static str,
        condition: String,
    },

    #[error("allocation support is empty")]
    EmptySupport,

    #[error("allocation weights have zero norm")]
    ZeroNorm,

    #[error("coefficient {coeff} for {pauli} lies outside the measured plan support")]
    OutsideSupport { pauli: String, coeff: f64 },

    #[error("no expectation value available for {0}")]
    OracleMiss(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("oracle evaluation failed at shift {shift:?}: {source}")]
    OracleFailure {
        shift: Vec<(usize, f64)>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}
