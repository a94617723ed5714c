//! Simulated annealing over layer count, materials and thicknesses.

use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use prism_core::dataset::{sample_design, SamplerConfig};
use prism_core::designer::{DesignOutcome, InverseDesigner};
use prism_core::materials::NUM_MATERIALS;
use prism_core::rng::{stream_rng, sub_stream, Rng};
use prism_core::{Design, Error, Result, Simulator, Spectrum};

use crate::merit::merit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaConfig {
    pub restarts: usize,
    pub steps_per_restart: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// Standard deviation of thickness perturbations, nm.
    pub thickness_sigma: f64,
    /// Relative weights of (perturb, swap, insert, remove).
    pub move_weights: [f64; 4],
    pub min_layers: usize,
    pub max_layers: usize,
    pub thickness_min: f64,
    pub thickness_max: f64,
    pub seed: u64,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            steps_per_restart: 5000,
            t_start: 0.1,
            t_end: 1e-4,
            thickness_sigma: 30.0,
            move_weights: [0.55, 0.15, 0.15, 0.15],
            min_layers: 1,
            max_layers: 20,
            thickness_min: 10.0,
            thickness_max: 500.0,
            seed: 0,
        }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("sa: {m}")));
        if !(self.t_start > self.t_end && self.t_end > 0.0) {
            return bad("need t_start > t_end > 0");
        }
        if self.move_weights.iter().any(|w| !(*w >= 0.0)) || self.move_weights.iter().sum::<f64>() <= 0.0 {
            return bad("move weights must be non-negative and not all zero");
        }
        if self.restarts == 0 || self.steps_per_restart == 0 {
            return bad("restarts and steps_per_restart must be positive");
        }
        if self.min_layers == 0 || self.min_layers > self.max_layers {
            return bad("need 1 <= min_layers <= max_layers");
        }
        if !(self.thickness_min > 0.0 && self.thickness_min < self.thickness_max) || self.thickness_sigma <= 0.0 {
            return bad("need 0 < thickness_min < thickness_max and sigma > 0");
        }
        Ok(())
    }

    /// Temperature at step `k` of a restart.
    pub fn temperature(&self, k: usize) -> f64 {
        if self.steps_per_restart < 2 {
            return self.t_start;
        }
        self.t_start * (self.t_end / self.t_start).powf(k as f64 / (self.steps_per_restart - 1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartTrace {
    pub best: Design,
    pub best_merit: f64,
    /// Best-so-far merit after each step.
    pub best_so_far: Vec<f64>,
    /// Merit of the current state after each step.
    pub current: Vec<f64>,
    pub accepted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaResult {
    pub design: Design,
    pub merit: f64,
    pub restarts: Vec<RestartTrace>,
}

impl SaResult {
    /// Running minimum over all restarts laid end to end.
    pub fn overall_trace(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.restarts
            .iter()
            .flat_map(|r| r.best_so_far.iter())
            .map(|&m| {
                best = best.min(m);
                best
            })
            .collect()
    }
}

fn propose(design: &Design, mv: usize, cfg: &SaConfig, rng: &mut Rng, normal: &Normal<f64>) -> Option<Design> {
    let mut m = design.materials().to_vec();
    let mut t = design.thicknesses().to_vec();
    let n = m.len();
    match mv {
        0 => {
            let i = rng.gen_range(0..n);
            t[i] = (t[i] + normal.sample(rng)).clamp(cfg.thickness_min, cfg.thickness_max);
        }
        1 => {
            let i = rng.gen_range(0..n);
            let other = rng.gen_range(0..NUM_MATERIALS - 1);
            m[i] = if other >= m[i] { other + 1 } else { other };
        }
        2 => {
            if n >= cfg.max_layers {
                return None;
            }
            let i = rng.gen_range(0..=n);
            m.insert(i, rng.gen_range(0..NUM_MATERIALS));
            t.insert(i, rng.gen_range(cfg.thickness_min..=cfg.thickness_max));
        }
        _ => {
            if n <= cfg.min_layers {
                return None;
            }
            let i = rng.gen_range(0..n);
            m.remove(i);
            t.remove(i);
        }
    }
    Design::new(m, t).ok()
}

fn run_restart(target: &Spectrum, cfg: &SaConfig, sim: &Simulator, mut rng: Rng) -> Result<RestartTrace> {
    let sampler = SamplerConfig {
        min_layers: cfg.min_layers,
        max_layers: cfg.max_layers,
        seed: 0,
        ..SamplerConfig::default()
    };
    let moves = WeightedIndex::new(cfg.move_weights).map_err(|e| Error::Config(e.to_string()))?;
    let normal = Normal::new(0.0, cfg.thickness_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut current = sample_design(&mut rng, &sampler);
    let mut cur_merit = merit(&current, target, sim)?;
    let mut best = current.clone();
    let mut best_merit = cur_merit;
    let mut best_so_far = Vec::with_capacity(cfg.steps_per_restart);
    let mut trace = Vec::with_capacity(cfg.steps_per_restart);
    let mut accepted = 0;
    for k in 0..cfg.steps_per_restart {
        let temp = cfg.temperature(k);
        let mv = moves.sample(&mut rng);
        let u: f64 = rng.gen();
        if let Some(cand) = propose(&current, mv, cfg, &mut rng, &normal) {
            if let Ok(m) = merit(&cand, target, sim) {
                let delta = m - cur_merit;
                if delta <= 0.0 || u < (-delta / temp).exp() {
                    current = cand;
                    cur_merit = m;
                    accepted += 1;
                    if m < best_merit {
                        best_merit = m;
                        best = current.clone();
                    }
                }
            }
        }
        best_so_far.push(best_merit);
        trace.push(cur_merit);
    }
    Ok(RestartTrace {
        best,
        best_merit,
        best_so_far,
        current: trace,
        accepted,
    })
}

/// Anneals from `cfg.restarts` independent starting designs and returns the
/// best design found. Restart `r` for target `target_index` draws from its own
/// stream, so results do not depend on the number of worker threads.
pub fn sa_inverse(target: &Spectrum, cfg: &SaConfig, sim: &Simulator, target_index: usize) -> Result<SaResult> {
    cfg.validate()?;
    let restarts: Vec<RestartTrace> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_restart(target, cfg, sim, stream_rng(cfg.seed, sub_stream(target_index as u64, r as u64))))
        .collect::<Result<_>>()?;
    // First restart wins ties.
    let best = restarts
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.best_merit.total_cmp(&b.1.best_merit).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("at least one restart");
    Ok(SaResult {
        design: restarts[best].best.clone(),
        merit: restarts[best].best_merit,
        restarts,
    })
}

pub struct SaDesigner {
    pub config: SaConfig,
    pub sim: Arc<Simulator>,
}

impl InverseDesigner for SaDesigner {
    fn name(&self) -> &str {
        "sa"
    }

    fn design(&self, target: &Spectrum, target_index: usize) -> Result<DesignOutcome> {
        let r = sa_inverse(target, &self.config, &self.sim, target_index)?;
        let trace = r.overall_trace();
        Ok(DesignOutcome {
            design: r.design,
            merit: Some(r.merit),
            trace,
        })
    }
}
