use mdk_core::{BoundError, ChannelError, KeyRateError, PipelineError, SourceError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("numeric degeneracy: {0}")]
    Degenerate(String),
    #[error("{0}")]
    DecoyCondition(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    /// 0 success, 2 config, 3 numeric degeneracy, 4 decoy-condition violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::DecoyCondition(_) => 4,
            CliError::Io { .. } | CliError::Other(_) => 1,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn from_source(e: SourceError) -> Self {
        match e {
            SourceError::DecoyConditionViolated(_)
            | SourceError::UndefinedRatio(_)
            | SourceError::IntensityOrder { .. } => CliError::DecoyCondition(e.to_string()),
            other => CliError::Config(format!("sources: {other}")),
        }
    }
}

impl From<BoundError> for CliError {
    fn from(e: BoundError) -> Self {
        match e {
            BoundError::DegenerateDenominator { .. } | BoundError::ZeroSingleYield => {
                CliError::Degenerate(e.to_string())
            }
            BoundError::DecoyCondition { .. } | BoundError::VanishingProbability { .. } => {
                CliError::DecoyCondition(e.to_string())
            }
            BoundError::Source { source, .. } => CliError::from_source(source),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Bound(b) => b.into(),
            PipelineError::Channel(ChannelError::Observables(b)) => b.into(),
            PipelineError::Channel(c) => CliError::Config(c.to_string()),
            PipelineError::KeyRate(k) => k.into(),
            PipelineError::Coding(q) => CliError::Config(format!("coding: {q}")),
        }
    }
}

impl From<KeyRateError> for CliError {
    fn from(e: KeyRateError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ChannelError> for CliError {
    fn from(e: ChannelError) -> Self {
        PipelineError::Channel(e).into()
    }
}
