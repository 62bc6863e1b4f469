use thiserror::Error;

/// Errors raised by the analysis library.
#[derive(Debug, Error)]
pub enum LocalityError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("temperature must be strictly positive, got {0}")]
    NonPositiveTemperature(f64),

    #[error("instance too large: {evaluations} kernel evaluations exceed cap {cap}")]
    CapExceeded { evaluations: u128, cap: u128 },

    #[error("chain is not unichain: {0}")]
    Reducible(String),

    #[error("chain is periodic: recurrent class has period {period}")]
    Periodic { period: usize },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("support graph inconsistent with matrix: {0}")]
    GraphMismatch(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<LocalityError>,
    },
}

impl LocalityError {
    /// Strips `AtIteration` wrappers.
    pub fn root(&self) -> &LocalityError {
        match self {
            LocalityError::AtIteration { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for reducibility and periodicity failures.
    pub fn is_irreducibility(&self) -> bool {
        matches!(
            self.root(),
            LocalityError::Reducible(_) | LocalityError::Periodic { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, LocalityError>;
