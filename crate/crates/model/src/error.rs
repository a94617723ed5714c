use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite activations in {stage} (layer {layer})")]
    NonFinite { stage: &'static str, layer: usize },
    #[error("non-finite gradient for {0}")]
    NonFiniteGradient(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no non-padding tokens in batch")]
    EmptyBatch,
    #[error("{0} is a special token, not a material")]
    SpecialToken(usize),
    #[error("training diverged at step {step}; last good checkpoint: {last_checkpoint:?}")]
    Diverged {
        step: usize,
        last_checkpoint: Option<PathBuf>,
    },
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] prism_core::Error),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
