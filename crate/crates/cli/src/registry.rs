//! Inverse-design strategies available to the CLI, selected by name.

use std::sync::Arc;

use prism_baselines::{DiffOptConfig, DiffOptDesigner, SaConfig, SaDesigner};
use prism_core::designer::{InverseDesigner, Registry};
use prism_core::{Error, Simulator};
use prism_model::checkpoint::Checkpoint;
use prism_model::decode::{DecodeConfig, DecodeMode};
use prism_model::designer::PrismDesigner;
use prism_model::ModelParams;

/// Everything a strategy may need at construction time.
pub struct Context {
    pub sim: Arc<Simulator>,
    pub model: Option<(Arc<ModelParams>, prism_model::ModelConfig)>,
    pub decode: DecodeConfig,
    pub sa: SaConfig,
    pub diffopt: DiffOptConfig,
}

impl Context {
    pub fn new(sim: Arc<Simulator>) -> Self {
        Self {
            sim,
            model: None,
            decode: DecodeConfig::default(),
            sa: SaConfig::default(),
            diffopt: DiffOptConfig::default(),
        }
    }

    pub fn with_checkpoint(mut self, ck: Checkpoint) -> Self {
        self.model = Some((Arc::new(ck.params), ck.model));
        self
    }
}

fn prism(ctx: &Context, mode: DecodeMode) -> prism_core::Result<Box<dyn InverseDesigner>> {
    let (params, config) = ctx
        .model
        .clone()
        .ok_or_else(|| Error::Config("model strategies need a checkpoint".into()))?;
    ctx.decode
        .validate(&config)
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(Box::new(PrismDesigner::new(params, config, ctx.decode.clone(), mode, ctx.sim.clone())))
}

pub fn registry() -> Registry<Context> {
    let mut r = Registry::new();
    r.register("prism-greedy", |c| prism(c, DecodeMode::Greedy))
        .register("prism-beam", |c| prism(c, DecodeMode::Beam))
        .register("prism-rerank", |c| prism(c, DecodeMode::Rerank))
        .register("sa", |c: &Context| {
            c.sa.validate()?;
            Ok(Box::new(SaDesigner {
                config: c.sa.clone(),
                sim: c.sim.clone(),
            }))
        })
        .register("diffopt", |c: &Context| {
            c.diffopt.validate()?;
            Ok(Box::new(DiffOptDesigner {
                config: c.diffopt.clone(),
                sim: c.sim.clone(),
            }))
        });
    r
}
