//! PRISM decoding exposed as an [`InverseDesigner`].

use std::sync::Arc;

use prism_core::designer::{DesignOutcome, InverseDesigner};
use prism_core::{Simulator, Spectrum};

use crate::config::ModelConfig;
use crate::decode::{decode, DecodeConfig, DecodeMode};
use crate::params::ModelParams;

pub struct PrismDesigner {
    name: String,
    params: Arc<ModelParams>,
    config: ModelConfig,
    decode: DecodeConfig,
    mode: DecodeMode,
    sim: Arc<Simulator>,
}

impl PrismDesigner {
    pub fn new(
        params: Arc<ModelParams>,
        config: ModelConfig,
        decode: DecodeConfig,
        mode: DecodeMode,
        sim: Arc<Simulator>,
    ) -> Self {
        Self {
            name: format!("prism-{}", mode.as_str()),
            params,
            config,
            decode,
            mode,
            sim,
        }
    }
}

impl InverseDesigner for PrismDesigner {
    fn name(&self) -> &str {
        &self.name
    }

    fn design(&self, target: &Spectrum, _target_index: usize) -> prism_core::Result<DesignOutcome> {
        let c = decode(&self.params, &self.config, target, &self.decode, self.mode, &self.sim)
            .map_err(|e| prism_core::Error::Other(e.to_string()))?;
        Ok(DesignOutcome {
            design: c.design,
            merit: c.resim_mae,
            trace: Vec::new(),
        })
    }
}
