use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch in {context} (expected {expected}, found {found})")]
    Shape {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("power flow did not converge")]
    NotConverged,

    #[error("training diverged at epoch {epoch}: {detail}")]
    TrainingDiverged { epoch: usize, detail: String },

    #[error("input lies on a ReLU kink: neuron {neuron} of layer {layer} has |z| = {magnitude:e}")]
    KinkProximity {
        layer: usize,
        neuron: usize,
        magnitude: f64,
    },

    #[error("LP numerical failure: {0}")]
    Numerical(String),

    #[error("no feasible operating region was retained by pruning")]
    NoFeasibleRegion,

    #[error("comfort window of building {building} cannot be met at step {step}")]
    ComfortInfeasible { building: usize, step: usize },

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
