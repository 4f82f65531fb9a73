use prefdens_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Malformed(String),
    #[error("{0}")]
    Em(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Malformed(_) => 2,
            Self::Em(_) => 3,
            Self::Mismatch(_) => 4,
            Self::Other(_) => 1,
        }
    }

    /// Attach the offending path or flag to the message.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            Self::Malformed(m) => Self::Malformed(format!("{what}: {m}")),
            Self::Em(m) => Self::Em(format!("{what}: {m}")),
            Self::Mismatch(m) => Self::Mismatch(format!("{what}: {m}")),
            Self::Other(m) => Self::Other(format!("{what}: {m}")),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::EmFailed(_) | CoreError::DegenerateEvidence(_) | CoreError::NotPositiveDefinite(_) => {
                Self::Em(msg)
            }
            CoreError::Mismatch(_) | CoreError::DimensionMismatch { .. } | CoreError::OutcomeOutOfRange { .. } => {
                Self::Mismatch(msg)
            }
            CoreError::Io(_)
            | CoreError::Json(_)
            | CoreError::Csv(_)
            | CoreError::Malformed(_)
            | CoreError::InvalidDomain(_)
            | CoreError::UnknownVariable(_)
            | CoreError::ArityTooSmall(_)
            | CoreError::InvalidHyperparameter(_)
            | CoreError::RepeatedOutcome(_) => Self::Malformed(msg),
            CoreError::RankDeficient { .. } => Self::Other(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Other(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Malformed(e.to_string())
    }
}
