//! Crate-wide error type.
//!
//! One closed enum so callers (and the CLI exit-code mapping) can match on
//! every failure mode the pipeline can produce.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // --- quantities and units ---
    #[error("unparsable quantity {raw:?}: {reason}")]
    UnparsableQuantity { raw: String, reason: String },
    #[error("unknown unit in {raw:?}: {reason}")]
    UnknownUnit { raw: String, reason: String },
    #[error("unit mismatch: {left:?} vs {right:?}")]
    UnitMismatch { left: String, right: String },

    // --- scenarios and documents ---
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
    #[error("missing required section {0:?}")]
    MissingSection(String),
    #[error("duplicate section {0:?}")]
    DuplicateSection(String),
    #[error("missing decision marker: {0}")]
    MissingDecisionMarker(String),
    #[error("invalid document: {0}")]
    DocumentInvalid(String),

    // --- knowledge base ---
    #[error("corpus not found at {0}")]
    CorpusNotFound(PathBuf),
    #[error("malformed corpus doc {path}: {cause}")]
    MalformedDoc { path: PathBuf, cause: String },

    // --- backends ---
    #[error("request timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("remote refusal (status {status}): {body}")]
    RemoteRefusal { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("scripted backend received a prompt without a known task header")]
    UnrecognizedScriptedTask,

    // --- agents and tasks ---
    #[error("missing artifact {{{placeholder}}} at {path}")]
    MissingArtifact { placeholder: String, path: PathBuf },
    #[error("tool {tool} not allowed for agent {agent}")]
    ToolNotAllowed { agent: String, tool: String },
    #[error("tool io error on {path}: {cause}")]
    ToolIoError { path: PathBuf, cause: String },
    #[error("no structured block in backend output")]
    NoStructuredBlock,
    #[error("schema violation in {field}: {cause}")]
    SchemaViolation { field: String, cause: String },
    #[error("invalid task binding: task {task} belongs to {expected}, not {given}")]
    TaskBinding {
        task: String,
        expected: String,
        given: String,
    },
    #[error("invalid prompt template: {0}")]
    TemplateInvalid(String),

    // --- orchestration ---
    #[error("stage {stage} failed: {cause}")]
    StageFailure {
        stage: String,
        #[source]
        cause: Box<Error>,
    },
    #[error("workspace error at {path}: {cause}")]
    Workspace { path: PathBuf, cause: String },

    // --- evaluation ---
    #[error("length mismatch: {predictions} predictions vs {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("empty input: accuracy needs at least one prediction")]
    EmptyInput,
    #[error("invalid generator spec: {0}")]
    SpecInvalid(String),
    #[error("dataset parse error at row {row}: {cause}")]
    DatasetRow { row: usize, cause: String },

    // --- configuration / io ---
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error on {path}: {cause}")]
    Io { path: PathBuf, cause: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an error as a stage failure, preserving the original cause.
    pub fn stage(stage: &str, cause: Error) -> Error {
        Error::StageFailure {
            stage: stage.to_string(),
            cause: Box::new(cause),
        }
    }

    pub fn io(path: impl Into<PathBuf>, err: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            cause: err.to_string(),
        }
    }
}
