use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported activation for requested derivative order: {0}")]
    UnsupportedActivation(String),

    #[error("score is undefined for this target: {0}")]
    UnsupportedScore(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("simulation diverged at step {step}: {what}")]
    DivergedSimulation { step: usize, what: String },

    #[error("training diverged at batch {step}; last finite parameters retained")]
    DivergedTraining {
        step: usize,
        last: Box<crate::autodiff::MlpParams>,
    },

    #[error("grid resolution too coarse: {0}")]
    GridResolution(String),

    #[error("ill-posed Hamiltonian: {0}")]
    IllPosedHamiltonian(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
