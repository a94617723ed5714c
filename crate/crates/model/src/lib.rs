//! Decoder-only model for inverse thin-film design.
//!
//! The sequence is `[SPEC, m_1, ..., m_L, EOS]`: the target spectrum projected
//! into one token, then material tokens. Positions are cumulative physical
//! depth in nm and enter only through rotary attention. Two heads read the
//! final hidden states: material logits and one log-space thickness per
//! vocabulary entry. Gradients are computed by an explicit reverse pass.

pub mod backward;
pub mod batch;
pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod designer;
pub mod error;
pub mod forward;
pub mod loss;
pub mod params;
pub mod tensor;
pub mod train;

pub use batch::TokenBatch;
pub use config::ModelConfig;
pub use error::{ModelError, Result};
pub use forward::{forward, ForwardOptions, ModelOutput};
pub use params::ModelParams;
