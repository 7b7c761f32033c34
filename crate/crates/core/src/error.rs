use crate::skeleton::Frame;
use thiserror::Error;

/// Error type shared by every module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: expected frame {expected}, got {got}")]
    FrameMismatch {
        op: &'static str,
        expected: &'static str,
        got: Frame,
    },

    #[error("{op}: non-finite value in {what}")]
    NonFinite { op: &'static str, what: String },

    #[error("{op}: joint count {got} does not match topology ({expected})")]
    JointCountMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{op}: dimension mismatch, expected {expected}, got {got}")]
    DimMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("forward in train mode requires a batch of at least 2 rows, got {got}")]
    BatchTooSmall { got: usize },

    #[error("non-finite gradient in {location}")]
    NonFiniteGradient { location: String },

    #[error("non-finite loss at phase {phase}, epoch {epoch}, step {step}")]
    NonFiniteLoss {
        phase: &'static str,
        epoch: usize,
        step: usize,
    },

    #[error("zero-length bone '{bone}': direction is undefined")]
    ZeroLengthBone { bone: String },

    #[error("pose file {path}: {kind}")]
    PoseFile { path: String, kind: PoseFileError },

    #[error("checkpoint {path}: {kind}")]
    Checkpoint { path: String, kind: CheckpointError },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// What went wrong while reading or writing a pose file.
#[derive(Debug, Error)]
pub enum PoseFileError {
    #[error("missing or malformed header line")]
    MissingHeader,
    #[error("unsupported format version {got} (this build reads version {supported})")]
    Version { got: u32, supported: u32 },
    #[error("header: {0}")]
    Header(String),
    #[error("record {index}: {msg}")]
    Record { index: usize, msg: String },
    #[error("record {index}: non-finite coordinate at joint {joint}")]
    NonFiniteRecord { index: usize, joint: usize },
    #[error("topology mismatch: file declares '{file_topology}' with {file_joints} joints, expected '{expected_topology}' with {expected_joints}")]
    TopologyMismatch {
        file_topology: String,
        file_joints: usize,
        expected_topology: String,
        expected_joints: usize,
    },
}

/// What went wrong while reading a checkpoint.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic: not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {got} (this build reads version {supported})")]
    Version { got: u32, supported: u32 },
    #[error("truncated file: expected {expected} more bytes for {what}")]
    Truncated { what: &'static str, expected: usize },
    #[error("corrupt section '{0}'")]
    Corrupt(String),
    #[error("config mismatch on resume: {0}")]
    ConfigMismatch(String),
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
