//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid network spec: {0}")]
    Spec(String),

    #[error("trace was produced for parameter version {trace} but parameters are at version {params}")]
    StaleTrace { trace: u64, params: u64 },

    #[error("neuron index ({layer}, {index}) is out of range")]
    NeuronIndex { layer: usize, index: usize },

    #[error("value {0} is not a member of the sensitive domain")]
    SensitiveValue(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("gradient table is empty; nothing to solve")]
    EmptyGradientTable,

    #[error("gamma system infeasible (max residual {residual:.3e}) and projection fallback is disabled")]
    GammaInfeasible { residual: f64 },

    #[error("fair initialization not verified after {attempts} attempts; last verdict: {verdict}")]
    InitExhausted { attempts: usize, verdict: String },

    #[error("non-finite parameter value at layer {layer}")]
    NonFinite { layer: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("dataset error: {0}")]
    Data(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
