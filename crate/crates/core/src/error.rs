use thiserror::Error;

use crate::layout::Partition;

/// Errors raised by the model, sampler and estimator code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid layout: {0}")]
    Layout(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("coupling {pair} entry ({row}, {col}) is masked out but holds {value}")]
    MaskedCoupling {
        pair: String,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("state entry {index} of partition {partition:?} is {value}, expected 0 or 1")]
    NotBinary {
        partition: Partition,
        index: usize,
        value: u8,
    },

    #[error("spin entry {index} is {value}, expected -1 or +1")]
    NotSpin { index: usize, value: i8 },

    #[error("enumeration over {nodes} nodes exceeds the cap of {cap}")]
    EnumerationCap { nodes: usize, cap: usize },

    #[error("couplings violate the quadripartite structure: {0}")]
    Structure(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("unsupported format version {found} (supported: {supported})")]
    FormatVersion { found: u32, supported: u32 },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("request timed out: {0}")]
    Timeout(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("handle {0} is not known to this backend (stale or from another instance)")]
    StaleHandle(String),

    #[error("handle {0} is closed")]
    HandleClosed(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("calibration step not possible: {0}")]
    Calibration(String),
}

impl Error {
    /// True for failures that come from reaching or talking to a backend
    /// rather than from invalid input.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            Error::Transport(_)
                | Error::Timeout(_)
                | Error::Protocol(_)
                | Error::StaleHandle(_)
                | Error::HandleClosed(_)
                | Error::Backend(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape {
            what: what.to_string(),
            expected,
            got,
        });
    }
    Ok(())
}
