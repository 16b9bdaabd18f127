use thiserror::Error;

pub type Result<T> = std::result::Result<T, BetError>;

#[derive(Debug, Error)]
pub enum BetError {
    #[error("empty input: {0}")]
    Empty(String),

    #[error("state dimension mismatch at episode {episode}, step {step}: expected {expected}, got {got}")]
    EpisodeDimension {
        episode: u64,
        step: u64,
        expected: usize,
        got: usize,
    },

    #[error("state dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("action {action} out of range for action count {action_count}")]
    ActionOutOfRange { action: usize, action_count: usize },

    #[error("non-finite state value at episode {episode}, step {step}")]
    NonFinite { episode: u64, step: u64 },

    #[error("duplicate experience at episode {episode}, step {step}")]
    DuplicateStep { episode: u64, step: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("expected format tag {expected:?}, found {found:?}")]
    FormatTag { expected: String, found: String },

    #[error("unsupported {format} document version {found} (supported: {supported})")]
    Version {
        format: String,
        found: u64,
        supported: u64,
    },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("invalid document: {0}")]
    Schema(String),

    #[error("environment failure at episode {episode}, step {step}: {message}")]
    Env {
        episode: u64,
        step: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BetError {
    /// True for errors caused by bad user configuration rather than bad data.
    pub fn is_config(&self) -> bool {
        matches!(self, BetError::Config(_))
    }
}
