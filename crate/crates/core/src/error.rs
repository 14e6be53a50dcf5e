use std::path::PathBuf;

/// Crate-wide error type. Variants are coarse enough to match on in tests and
/// carry enough context (path, offset, line, stage) to locate the failure.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Binary format violation, reported with the byte offset of the defect.
    #[error("format error in {path} at byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    /// Malformed line in a line-oriented text file (1-based line number).
    #[error("malformed line {line} in {path}: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    /// Remote endpoint failure (after retries) or a replay-cache miss.
    #[error("endpoint error in {stage}: {message}")]
    Endpoint { stage: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    /// A pipeline stage failed for a specific video.
    #[error("stage {stage} failed for video {video_id}: {source}")]
    Stage {
        stage: String,
        video_id: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    pub fn shape(
        context: impl Into<String>,
        expected: impl std::fmt::Display,
        actual: impl std::fmt::Display,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub fn endpoint(stage: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Endpoint {
            stage: stage.into(),
            message: message.into(),
        }
    }

    pub fn in_stage(self, stage: &str, video_id: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            video_id: video_id.to_string(),
            source: Box::new(self),
        }
    }
}
