use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("endpoint out of range: edge ({u}, {v}) with n = {n}")]
    EndpointOutOfRange { u: usize, v: usize, n: usize },

    #[error("self-loop in edge list at node {0}")]
    SelfLoop(usize),

    #[error("label {label} of node {node} outside [0, {classes})")]
    LabelOutOfRange {
        node: usize,
        label: usize,
        classes: usize,
    },

    #[error("{mask} node {node} has no label")]
    UnlabeledMaskNode { mask: &'static str, node: usize },

    #[error("node {node} appears in both train and test masks")]
    OverlappingMasks { node: usize },

    #[error("node id {node} outside [0, {n}) in {mask} mask")]
    MaskOutOfRange {
        mask: &'static str,
        node: usize,
        n: usize,
    },

    #[error("dimension mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid dropout rate {0}: must lie in [0, 1)")]
    DropoutRate(f64),

    #[error("backward called without a saved forward context ({0})")]
    MissingContext(&'static str),

    #[error("stale forward context: saved in round {saved}, backward in round {current}")]
    StaleContext { saved: u32, current: u32 },

    #[error("missing latent from client {0}")]
    MissingLatent(usize),

    #[error("training diverged in round {round}: loss = {loss}")]
    Divergence { round: u32, loss: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed message: {0}")]
    Wire(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
