use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal numerical error: {0}")]
    Internal(String),

    /// The eigenvalue-1 space of the identity transfer matrix is not one-dimensional.
    #[error("degenerate transfer matrix: spectral gap {gap:.3e} at the unit eigenvalue")]
    DegenerateTransfer { gap: f64 },

    /// Σ_ℓ ρ_ℓℓ vanished for a sample, so its class distribution is undefined.
    #[error("degenerate readout for sample {sample}: class weight {weight:.3e}")]
    DegenerateReadout { sample: usize, weight: f64 },

    #[error("retraction failed: X + ξ is rank deficient")]
    RetractionFailure,

    /// A simulated channel lost trace; this only happens if the simulator is wrong.
    #[error("channel integrity violated: trace {trace} (deviation {deviation:.3e})")]
    ChannelIntegrity { trace: f64, deviation: f64 },

    #[error("gate budget exhausted after {cnots} CNOTs; best distance {best_distance:.3e}")]
    BudgetExceeded { cnots: usize, best_distance: f64 },

    #[error("register of {qubits} qubits exceeds the cap of {cap}")]
    ResourceLimit { qubits: usize, cap: usize },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
