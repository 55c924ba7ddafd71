use std::fmt;

use thiserror::Error;

use crate::data::ValidityReport;
use crate::fact::Violation;

fn join(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Error)]
pub enum FactError {
    #[error("invalid fact: {}", join(.0))]
    Invalid(Vec<Violation>),
}

/// Malformed fact-spec (or other JSON) document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn from_json(e: serde_json::Error) -> Self {
        ParseError {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at {}:{}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Error)]
pub enum DataError {
    #[error("dataset has no data rows")]
    EmptyDataset,
    #[error("malformed CSV at line {line}: {message}")]
    Format { line: u64, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("value `{value}` is not in the domain of `{field}`")]
    Domain { field: String, value: String },
    #[error("type error: {0}")]
    Type(String),
    #[error("enumeration would produce about {estimate} candidates (limit {limit})")]
    Capacity { estimate: u64, limit: u64 },
    #[error("invalid fact: {}", join(&.0.violations))]
    Invalid(ValidityReport),
}

#[derive(Debug, Clone, Error)]
pub enum EmbedError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("zero vector has no direction")]
    DegenerateVector,
    #[error(transparent)]
    Fact(#[from] FactError),
    #[error("malformed embedding table at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("no table entry for `{0}`")]
    Miss(String),
    #[error("training needs at least {needed} trigrams, got {got}")]
    NotEnoughTrigrams { needed: usize, got: usize },
    #[error("trigram facts must be pairwise distinct")]
    DuplicateTrigramFacts,
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("invalid embedder config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Error)]
pub enum InterpolationError {
    #[error("keyframes are identical")]
    DegenerateKeyframes,
    #[error("start and target vectors coincide")]
    DegenerateDirection,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("keyframe is invalid: {}", join(&.0.violations))]
    InvalidKeyframe(ValidityReport),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Data(#[from] DataError),
}
