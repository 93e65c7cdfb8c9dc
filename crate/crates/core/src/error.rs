//! Error type shared by the pipeline modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // geometry
    #[error("degenerate boxes")]
    DegenerateBoxes,

    // relation library
    #[error("missing relation: {name}")]
    MissingRelation { name: String },
    #[error("arity mismatch: {relation} expects {expected}, got {got} args")]
    ArityMismatch {
        relation: String,
        expected: String,
        got: usize,
    },
    #[error("adjustment limit reached for '{relation}' (max {max})")]
    AdjustmentLimit { relation: String, max: u32 },
    #[error("synthesis failed for '{name}': {reason}")]
    SynthesisFailed { name: String, reason: String },
    #[error("relation '{name}' already defined")]
    RelationExists { name: String },
    #[error("schema error in {path}: {detail}")]
    Schema { path: String, detail: String },

    // gateway
    #[error("cassette miss: {fingerprint}")]
    CassetteMiss { fingerprint: String },
    #[error("cassette conflict: {fingerprint} already recorded with a different response")]
    CassetteConflict { fingerprint: String },
    #[error("provider error: status {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("request timed out after {seconds} s")]
    Timeout { seconds: u64 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("tag not found: {tag}")]
    TagNotFound { tag: String },
    #[error("{placeholder} unbound")]
    PlaceholderUnbound { placeholder: String },
    #[error("unknown template id: {id}")]
    UnknownTemplate { id: String },
    #[error("unknown mock policy: {policy}")]
    UnknownMockPolicy { policy: String },
    #[error("request has no user message")]
    NoUserMessage,
    #[error("missing credential: environment variable {var} is not set")]
    MissingCredential { var: String },

    // stage 1
    #[error("unparseable line: {line}")]
    UnparseableLine { line: String },
    #[error("no anchor: no object placed at [0, 0, 0]")]
    NoAnchor,
    #[error("unparseable boolean verdict: {text}")]
    UnparseableBool { text: String },
    #[error("judge unparseable: {detail}")]
    JudgeUnparseable { detail: String },
    #[error("nothing to repair: incomplete set is empty")]
    NothingToRepair,

    // grounding
    #[error("object larger than surface: '{name}' needs {needed_px:.0} px on a {plane_px} px axis")]
    ObjectTooLarge {
        name: String,
        needed_px: f64,
        plane_px: u32,
    },
    #[error("stacking cycle: {cycle}")]
    StackingCycle { cycle: String },
    #[error("multiple supporters for '{name}'")]
    MultipleSupporters { name: String },
    #[error("invalid config: {detail}")]
    InvalidConfig { detail: String },

    // scene / layout
    #[error("invalid scene: {detail}")]
    InvalidScene { detail: String },
    #[error("unknown object: {name}")]
    UnknownObject { name: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
