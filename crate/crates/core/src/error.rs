use std::path::PathBuf;

use thiserror::Error;

use crate::kernel::SimTime;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("cannot schedule at {fire_at}: clock is already at {now}")]
    PastTimestamp { fire_at: SimTime, now: SimTime },
    #[error("advancing to {end} would skip an event pending at {next}")]
    SkippedEvents { next: SimTime, end: SimTime },
}

#[derive(Debug, Error, PartialEq)]
pub enum GestureError {
    #[error("noise sigma must be non-negative, got {0}")]
    InvalidSigma(f64),
    #[error("trace spans {0}ms, outside the accepted 200..=3000ms")]
    BadLength(u64),
    #[error("trace timestamps are not strictly increasing at the declared rate")]
    BadTimestamps,
    #[error("corpus line {line}: {reason}")]
    Corpus { line: usize, reason: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("frame truncated: needed {needed} bytes, had {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unknown role byte {0}")]
    UnknownRole(u8),
    #[error("heard list of {0} ids exceeds the frame limit")]
    TooManyIds(usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LogFormatError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Syntax(String),
    #[error("unknown preset `{0}` (known: indoor-room, outdoor)")]
    UnknownPreset(String),
    #[error("invalid `{field}`: {constraint}")]
    Invalid { field: String, constraint: String },
}

impl ScenarioError {
    pub(crate) fn invalid(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        ScenarioError::Invalid {
            field: field.into(),
            constraint: constraint.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("parameter grid is empty")]
    EmptyGrid,
    #[error("repetition count must be at least 1")]
    NoRepetitions,
    #[error("bad grid axis `{0}`: expected key=v1,v2,...")]
    BadAxis(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}
