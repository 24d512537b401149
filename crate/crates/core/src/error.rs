//! Error type shared across the pipeline.
//!
//! Every error maps onto one of five coarse classes (`ErrorClass`) so the
//! CLI can translate failures into distinct exit codes.

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure class, used for CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Invalid configuration, flags, or spec values.
    Config,
    /// Bad or inconsistent input data / on-disk artifacts.
    Data,
    /// Remote embedding service failures.
    Remote,
    /// Training / optimization failures.
    Training,
    /// Programming contract violations and unexpected I/O.
    Internal,
}

impl ErrorClass {
    /// Process exit code for this class.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Remote => 4,
            ErrorClass::Training => 5,
            ErrorClass::Internal => 6,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("missing or invalid field `{field}`{}", context.as_ref().map(|c| format!(" ({c})")).unwrap_or_default())]
    Structural {
        field: String,
        context: Option<String>,
    },

    #[error("input is not valid UTF-8: {0}")]
    Encoding(String),

    #[error("alignment failed: {0}")]
    Alignment(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("missing embedding coverage: {0}")]
    Coverage(String),

    #[error("remote embedding failed after {attempts} attempt(s): {message}\nattempt log:\n{log}")]
    Remote {
        attempts: u32,
        message: String,
        log: String,
    },

    #[error("training error at epoch {epoch}, batch {batch}: {message}")]
    Training {
        epoch: usize,
        batch: usize,
        message: String,
    },

    #[error("optimizer error: {0}")]
    Optimizer(String),

    #[error("file format error: {0}")]
    Format(String),

    #[error("sweep error: {0}")]
    Sweep(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Parse { .. }
            | Error::Structural { .. }
            | Error::Encoding(_)
            | Error::Alignment(_)
            | Error::Data(_)
            | Error::Split(_)
            | Error::Coverage(_)
            | Error::Format(_)
            | Error::Sweep(_) => ErrorClass::Data,
            Error::Remote { .. } => ErrorClass::Remote,
            Error::Training { .. } | Error::Optimizer(_) => ErrorClass::Training,
            Error::Contract(_) | Error::Io(_) => ErrorClass::Internal,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes_map_to_distinct_exit_codes() {
        let classes = [
            ErrorClass::Config,
            ErrorClass::Data,
            ErrorClass::Remote,
            ErrorClass::Training,
            ErrorClass::Internal,
        ];
        let mut codes: Vec<i32> = classes.iter().map(|c| c.exit_code()).collect();
        codes.sort_unstable();
        codes.dedup();
        assert_eq!(codes.len(), classes.len());
        assert!(codes.iter().all(|&c| c != 0));
    }

    #[test]
    fn error_display_carries_details() {
        let e = Error::Parse {
            offset: 17,
            message: "unexpected token".into(),
        };
        assert!(e.to_string().contains("byte 17"));
        let e = Error::Structural {
            field: "chapter".into(),
            context: Some("record 3".into()),
        };
        assert!(e.to_string().contains("chapter"));
        assert_eq!(e.class(), ErrorClass::Data);
    }
}
