use valence_core::{ContextError, StatsError, StoreError, SubspaceError};

/// Command failure, split by exit status: 1 for input problems, 2 for
/// numerical failures.
#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
}

impl AuditError {
    pub fn input(msg: impl Into<String>) -> Self {
        AuditError::Input(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        AuditError::Numerical(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AuditError::Input(_) => 1,
            AuditError::Numerical(_) => 2,
        }
    }

    /// Prefixes the message with `context`, keeping the category.
    pub fn context(self, context: impl std::fmt::Display) -> Self {
        match self {
            AuditError::Input(m) => AuditError::Input(format!("{context}: {m}")),
            AuditError::Numerical(m) => AuditError::Numerical(format!("{context}: {m}")),
        }
    }
}

impl From<std::io::Error> for AuditError {
    fn from(e: std::io::Error) -> Self {
        AuditError::Input(e.to_string())
    }
}

impl From<StoreError> for AuditError {
    fn from(e: StoreError) -> Self {
        AuditError::Input(e.to_string())
    }
}

impl From<ContextError> for AuditError {
    fn from(e: ContextError) -> Self {
        AuditError::Input(e.to_string())
    }
}

impl From<csv::Error> for AuditError {
    fn from(e: csv::Error) -> Self {
        AuditError::Input(e.to_string())
    }
}

impl From<SubspaceError> for AuditError {
    fn from(e: SubspaceError) -> Self {
        match e {
            SubspaceError::NotConverged { .. } | SubspaceError::Degenerate => {
                AuditError::Numerical(e.to_string())
            }
            other => AuditError::Input(other.to_string()),
        }
    }
}

impl From<StatsError> for AuditError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::ZeroDeviation | StatsError::ZeroVariance(_) => {
                AuditError::Numerical(e.to_string())
            }
            StatsError::Subspace(inner) => inner.into(),
            other => AuditError::Input(other.to_string()),
        }
    }
}
