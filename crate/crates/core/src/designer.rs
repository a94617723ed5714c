//! Inverse-design strategies behind one trait, selected by name at runtime.

use std::collections::BTreeMap;

use crate::tmm::{Design, Spectrum};
use crate::{Error, Result};

/// What a strategy returns for one target.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignOutcome {
    pub design: Design,
    /// The strategy's own merit (spectral MAE) if it computed one.
    pub merit: Option<f64>,
    /// Optional per-step trace (e.g. best-so-far merit).
    pub trace: Vec<f64>,
}

impl DesignOutcome {
    pub fn new(design: Design) -> Self {
        Self {
            design,
            merit: None,
            trace: Vec::new(),
        }
    }
}

/// An inverse design method: target spectrum in, design out.
///
/// `target_index` identifies the target within a run so stochastic methods can
/// derive per-target random streams that do not depend on scheduling.
pub trait InverseDesigner: Send + Sync {
    fn name(&self) -> &str;

    fn design(&self, target: &Spectrum, target_index: usize) -> Result<DesignOutcome>;
}

type Factory<C> = Box<dyn Fn(&C) -> Result<Box<dyn InverseDesigner>> + Send + Sync>;

/// Name → constructor table. `C` is whatever the caller needs to build a
/// strategy (checkpoints, configs, the simulator).
pub struct Registry<C> {
    factories: BTreeMap<String, Factory<C>>,
}

impl<C> Default for Registry<C> {
    fn default() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }
}

impl<C> Registry<C> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, name: &str, factory: F) -> &mut Self
    where
        F: Fn(&C) -> Result<Box<dyn InverseDesigner>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn build(&self, name: &str, ctx: &C) -> Result<Box<dyn InverseDesigner>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown method {name:?} (known: {})",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        factory(ctx)
    }
}
