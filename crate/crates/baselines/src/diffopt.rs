//! Gradient-based thickness refinement with random restarts.
//!
//! Each restart freezes a material sequence and optimises `u = ln(d / d_min)`
//! with L-BFGS. The smooth inner objective is MSE (or MAE) plus a quadratic
//! penalty above the thickness ceiling; restarts are scored by the MAE of the
//! clamped design, and the best iterate seen is kept.

use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use prism_core::designer::{DesignOutcome, InverseDesigner};
use prism_core::materials::NUM_MATERIALS;
use prism_core::rng::{stream_rng, sub_stream};
use prism_core::{Design, Error, Result, Simulator, Spectrum};

use crate::jacobian::spectrum_thickness_jacobian;
use crate::lbfgs::{minimize, LbfgsConfig, Status};
use crate::merit::merit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerObjective {
    Mse,
    Mae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffOptConfig {
    /// Restarts per layer count.
    pub restarts: usize,
    pub layer_counts: Vec<usize>,
    pub iterations: usize,
    pub thickness_min: f64,
    pub thickness_max: f64,
    /// Weight of `Σ ((d - d_max)/d_max)²` over layers above the ceiling.
    pub penalty: f64,
    pub objective: InnerObjective,
    pub memory: usize,
    pub seed: u64,
}

impl Default for DiffOptConfig {
    fn default() -> Self {
        Self {
            restarts: 32,
            layer_counts: vec![3, 5, 7, 10, 14, 18],
            iterations: 300,
            thickness_min: 10.0,
            thickness_max: 500.0,
            penalty: 1.0,
            objective: InnerObjective::Mse,
            memory: 10,
            seed: 0,
        }
    }
}

impl DiffOptConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("diffopt: {m}")));
        if self.restarts == 0 || self.iterations == 0 || self.memory == 0 {
            return bad("restarts, iterations and memory must be positive");
        }
        if self.layer_counts.is_empty() || self.layer_counts.iter().any(|&l| l == 0 || l > prism_core::tmm::MAX_LAYERS) {
            return bad("layer counts must lie in 1..=64");
        }
        if !(self.thickness_min > 0.0 && self.thickness_min < self.thickness_max) || self.penalty < 0.0 {
            return bad("need 0 < thickness_min < thickness_max and penalty >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartReport {
    pub layer_count: usize,
    pub restart: usize,
    pub initial_merit: f64,
    pub final_merit: f64,
    pub iterations: usize,
    pub line_search_failed: bool,
    pub design: Design,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffOptResult {
    pub design: Design,
    pub merit: f64,
    pub restarts: Vec<RestartReport>,
}

impl DiffOptResult {
    pub fn line_search_failures(&self) -> usize {
        self.restarts.iter().filter(|r| r.line_search_failed).count()
    }
}

const TRUST_FACTOR: f64 = 20.0;

struct Problem<'a> {
    materials: Vec<usize>,
    target: &'a Spectrum,
    sim: &'a Simulator,
    cfg: &'a DiffOptConfig,
}

impl Problem<'_> {
    fn thicknesses(&self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|v| self.cfg.thickness_min * v.exp()).collect()
    }

    fn clamped(&self, u: &[f64]) -> Option<Design> {
        let t = self
            .thicknesses(u)
            .into_iter()
            .map(|d| d.clamp(self.cfg.thickness_min, self.cfg.thickness_max))
            .collect();
        Design::new(self.materials.clone(), t).ok()
    }

    fn objective(&self, u: &[f64]) -> Option<(f64, Vec<f64>)> {
        let d = self.thicknesses(u);
        // Far outside the box the penalty already dominates; refusing the
        // point makes the line search back off before the phases overflow.
        if d.iter().any(|&di| !(di <= TRUST_FACTOR * self.cfg.thickness_max)) {
            return None;
        }
        let design = Design::new(self.materials.clone(), d.clone()).ok()?;
        let jac = spectrum_thickness_jacobian(&design, self.sim).ok()?;
        let n = jac.values.len() as f64;
        let resid: Vec<f64> = jac.values.iter().zip(self.target.values()).map(|(a, b)| a - b).collect();
        let (mut f, weights): (f64, Vec<f64>) = match self.cfg.objective {
            InnerObjective::Mse => (
                resid.iter().map(|r| r * r).sum::<f64>() / n,
                resid.iter().map(|r| 2.0 * r / n).collect(),
            ),
            InnerObjective::Mae => (
                resid.iter().map(|r| r.abs()).sum::<f64>() / n,
                resid.iter().map(|r| r.signum() / n).collect(),
            ),
        };
        let mut grad_d = jac.transpose_mul(&weights);
        let dmax = self.cfg.thickness_max;
        for (g, &di) in grad_d.iter_mut().zip(&d) {
            if di > dmax {
                let e = (di - dmax) / dmax;
                f += self.cfg.penalty * e * e;
                *g += self.cfg.penalty * 2.0 * e / dmax;
            }
        }
        // d = d_min·e^u ⇒ ∂/∂u = d·∂/∂d.
        let grad_u = grad_d.iter().zip(&d).map(|(g, di)| g * di).collect();
        Some((f, grad_u))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub design: Design,
    pub initial_merit: f64,
    pub final_merit: f64,
    pub iterations: usize,
    pub line_search_failed: bool,
}

/// Refines the thicknesses of a fixed material sequence from `initial`
/// thicknesses. The returned design is the best (by MAE) of the initial point
/// and every accepted iterate, so its merit never exceeds the initial merit.
pub fn refine(
    materials: &[usize],
    initial: &[f64],
    target: &Spectrum,
    cfg: &DiffOptConfig,
    sim: &Simulator,
) -> Result<Refinement> {
    let problem = Problem {
        materials: materials.to_vec(),
        target,
        sim,
        cfg,
    };
    let u0: Vec<f64> = initial.iter().map(|d| (d / cfg.thickness_min).ln()).collect();
    let start = problem
        .clamped(&u0)
        .ok_or_else(|| Error::InvalidDesign("initial thicknesses out of range".into()))?;
    let initial_merit = merit(&start, target, sim)?;
    let mut best = (start, initial_merit);
    let lcfg = LbfgsConfig {
        memory: cfg.memory,
        max_iterations: cfg.iterations,
        ..LbfgsConfig::default()
    };
    let result = minimize(
        |u| problem.objective(u),
        &u0,
        &lcfg,
        |u, _| {
            if let Some(d) = problem.clamped(u) {
                if let Ok(m) = merit(&d, target, sim) {
                    if m < best.1 {
                        best = (d, m);
                    }
                }
            }
        },
    );
    let (iterations, failed) = match result {
        Some(r) => (r.iterations, r.status == Status::LineSearchFailed),
        None => (0, true),
    };
    Ok(Refinement {
        design: best.0,
        initial_merit,
        final_merit: best.1,
        iterations,
        line_search_failed: failed,
    })
}

/// Random-restart L-BFGS over each configured layer count. With
/// `oracle_materials`, every layer-count slot is replaced by that sequence
/// (and its length), so the restart budget stays the same while only
/// thicknesses are searched.
pub fn diffopt_inverse(
    target: &Spectrum,
    cfg: &DiffOptConfig,
    sim: &Simulator,
    target_index: usize,
    oracle_materials: Option<&[usize]>,
) -> Result<DiffOptResult> {
    cfg.validate()?;
    let counts: Vec<usize> = match oracle_materials {
        Some(m) => vec![m.len(); cfg.layer_counts.len()],
        None => cfg.layer_counts.clone(),
    };
    let jobs: Vec<(usize, usize)> = counts
        .iter()
        .enumerate()
        .flat_map(|(ci, _)| (0..cfg.restarts).map(move |r| (ci, r)))
        .collect();
    let reports: Vec<RestartReport> = jobs
        .into_par_iter()
        .map(|(ci, r)| {
            let l = counts[ci];
            let job = (ci * cfg.restarts + r) as u64;
            let mut rng = stream_rng(cfg.seed, sub_stream(target_index as u64, job));
            let materials: Vec<usize> = match oracle_materials {
                Some(m) => m.to_vec(),
                None => (0..l).map(|_| rng.gen_range(0..NUM_MATERIALS)).collect(),
            };
            let init: Vec<f64> = (0..l).map(|_| rng.gen_range(cfg.thickness_min..=cfg.thickness_max)).collect();
            let f = refine(&materials, &init, target, cfg, sim)?;
            Ok(RestartReport {
                layer_count: l,
                restart: r,
                initial_merit: f.initial_merit,
                final_merit: f.final_merit,
                iterations: f.iterations,
                line_search_failed: f.line_search_failed,
                design: f.design,
            })
        })
        .collect::<Result<_>>()?;
    let best = reports
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.final_merit.total_cmp(&b.1.final_merit).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("at least one restart");
    Ok(DiffOptResult {
        design: reports[best].design.clone(),
        merit: reports[best].final_merit,
        restarts: reports,
    })
}

pub struct DiffOptDesigner {
    pub config: DiffOptConfig,
    pub sim: Arc<Simulator>,
}

impl InverseDesigner for DiffOptDesigner {
    fn name(&self) -> &str {
        "diffopt"
    }

    fn design(&self, target: &Spectrum, target_index: usize) -> Result<DesignOutcome> {
        let r = diffopt_inverse(target, &self.config, &self.sim, target_index, None)?;
        Ok(DesignOutcome {
            design: r.design,
            merit: Some(r.merit),
            trace: r.restarts.iter().map(|x| x.final_merit).collect(),
        })
    }
}
