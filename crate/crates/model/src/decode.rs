//! Autoregressive decoding: greedy, beam search and TMM reranking.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use prism_core::materials::{EOS, NUM_MATERIALS, PAD};
use prism_core::metrics::mae;
use prism_core::{Design, Simulator, Spectrum};

use crate::batch::TokenBatch;
use crate::config::ModelConfig;
use crate::forward::{forward, ForwardOptions};
use crate::loss::thickness_from_head;
use crate::params::ModelParams;
use crate::{ModelError, Result};

/// Largest log-space thickness the decoder will exponentiate.
const MAX_LOG_THICKNESS: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub max_layers: usize,
    pub beam_width: usize,
    pub include_greedy_in_pool: bool,
    /// Divides the logits before the log-softmax; does not change argmax.
    pub temperature: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            max_layers: 20,
            beam_width: 5,
            include_greedy_in_pool: true,
            temperature: 1.0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        if self.beam_width == 0 || self.max_layers == 0 {
            return Err(ModelError::Config("beam_width and max_layers must be at least 1".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(ModelError::Config("temperature must be positive".into()));
        }
        if self.max_layers + 2 > model.max_seq_len {
            return Err(ModelError::Config(format!(
                "max_layers {} needs {} tokens, model allows {}",
                self.max_layers,
                self.max_layers + 2,
                model.max_seq_len
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Beam,
    Rerank,
}

impl std::str::FromStr for DecodeMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "beam" => Ok(Self::Beam),
            "rerank" => Ok(Self::Rerank),
            _ => Err(ModelError::Config(format!("unknown decode mode '{s}' (greedy, beam, rerank)"))),
        }
    }
}

impl DecodeMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Greedy => "greedy",
            Self::Beam => "beam",
            Self::Rerank => "rerank",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub design: Design,
    /// Sum of the chosen material/EOS log-probabilities.
    pub model_logprob: f64,
    pub resim_spectrum: Option<Spectrum>,
    pub resim_mae: Option<f64>,
}

impl Candidate {
    fn new(design: Design, model_logprob: f64) -> Self {
        Self {
            design,
            model_logprob,
            resim_spectrum: None,
            resim_mae: None,
        }
    }
}

/// Next-token log-probabilities and log-space thicknesses for each prefix
/// (all prefixes must have the same length).
fn step(
    params: &ModelParams,
    config: &ModelConfig,
    target: &Spectrum,
    prefixes: &[&Design],
    temperature: f64,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let batch = TokenBatch::prefixes(prefixes.iter().map(|d| (*d, target)))?;
    let out = forward(params, config, &batch, &ForwardOptions::eval())?;
    let last = batch.seq;
    Ok((0..prefixes.len())
        .map(|b| {
            let z: Vec<f64> = out.logits_at(b, last).iter().map(|v| v / temperature).collect();
            (crate::loss::log_probs(&z), out.log_thickness_at(b, last).to_vec())
        })
        .collect())
}

fn extend(design: &Design, material: usize, log_thickness: &[f64], thk_min: f64) -> Result<Design> {
    let mut lt = log_thickness.to_vec();
    lt[material] = lt[material].min(MAX_LOG_THICKNESS);
    let d = thickness_from_head(&lt, material, thk_min)?;
    let mut m = design.materials().to_vec();
    let mut t = design.thicknesses().to_vec();
    m.push(material);
    t.push(d);
    Ok(Design::new(m, t)?)
}

/// Argmax over materials and EOS (PAD never chosen) until EOS or
/// `max_layers`, where EOS is forced.
pub fn greedy_decode(params: &ModelParams, config: &ModelConfig, target: &Spectrum, dc: &DecodeConfig) -> Result<Candidate> {
    dc.validate(config)?;
    let mut design = Design::empty();
    let mut logp = 0.0;
    loop {
        let (lp, lt) = step(params, config, target, &[&design], dc.temperature)?.remove(0);
        if design.len() >= dc.max_layers {
            logp += lp[EOS];
            break;
        }
        let mut best = 0;
        for i in 1..lp.len() {
            if i != PAD && lp[i] > lp[best] {
                best = i;
            }
        }
        logp += lp[best];
        if best == EOS {
            break;
        }
        design = extend(&design, best, &lt, config.thk_min)?;
    }
    Ok(Candidate::new(design, logp))
}

/// Length-synchronous beam search over material/EOS tokens. Each step keeps
/// the `beam_width` best expansions overall; expansions ending in EOS retire.
/// Returns finished candidates by descending log-probability.
pub fn beam_search(params: &ModelParams, config: &ModelConfig, target: &Spectrum, dc: &DecodeConfig) -> Result<Vec<Candidate>> {
    dc.validate(config)?;
    let k = dc.beam_width;
    let mut active = vec![(Design::empty(), 0.0)];
    let mut finished: Vec<Candidate> = Vec::new();
    while !active.is_empty() {
        let depth = active[0].0.len();
        let prefixes: Vec<&Design> = active.iter().map(|b| &b.0).collect();
        let stepped = step(params, config, target, &prefixes, dc.temperature)?;
        let mut expansions: Vec<(f64, usize, usize)> = Vec::new();
        for (bi, (lp, _)) in stepped.iter().enumerate() {
            for (tok, l) in lp.iter().enumerate() {
                let allowed = if depth >= dc.max_layers {
                    tok == EOS
                } else {
                    tok < NUM_MATERIALS || tok == EOS
                };
                if allowed {
                    expansions.push((active[bi].1 + l, bi, tok));
                }
            }
        }
        // Stable sort: ties resolve to the earlier beam, then the lower token.
        expansions.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
        let mut next = Vec::with_capacity(k);
        for &(score, bi, tok) in expansions.iter().take(k) {
            if tok == EOS {
                finished.push(Candidate::new(active[bi].0.clone(), score));
            } else {
                let d = extend(&active[bi].0, tok, &stepped[bi].1, config.thk_min)?;
                next.push((d, score));
            }
        }
        active = next;
    }
    finished.sort_by(|a, b| b.model_logprob.partial_cmp(&a.model_logprob).unwrap_or(Ordering::Equal));
    finished.truncate(k);
    Ok(finished)
}

/// Re-simulates every candidate and returns the one with the lowest MAE
/// against `target`; ties go to the higher model log-probability, then to the
/// earlier candidate. Candidates whose simulation fails are dropped.
pub fn tmm_rerank(candidates: Vec<Candidate>, target: &Spectrum, sim: &Simulator) -> Result<Candidate> {
    if candidates.is_empty() {
        return Err(ModelError::Config("no candidates to rerank".into()));
    }
    let scored: Vec<Option<Candidate>> = candidates
        .into_par_iter()
        .map(|mut c| {
            let s = sim.simulate(&c.design).ok()?;
            c.resim_mae = Some(mae(s.values(), target.values()));
            c.resim_spectrum = Some(s);
            Some(c)
        })
        .collect();
    let mut best: Option<Candidate> = None;
    for c in scored.into_iter().flatten() {
        let better = match &best {
            None => true,
            Some(b) => {
                let (m, bm) = (c.resim_mae.unwrap(), b.resim_mae.unwrap());
                m < bm || (m == bm && c.model_logprob > b.model_logprob)
            }
        };
        if better {
            best = Some(c);
        }
    }
    best.ok_or_else(|| ModelError::Config("simulation failed for every candidate".into()))
}

/// Decodes `target` in the given mode. Greedy and beam results carry no
/// resimulation; rerank pools the beam (plus greedy if configured).
pub fn decode(
    params: &ModelParams,
    config: &ModelConfig,
    target: &Spectrum,
    dc: &DecodeConfig,
    mode: DecodeMode,
    sim: &Simulator,
) -> Result<Candidate> {
    match mode {
        DecodeMode::Greedy => greedy_decode(params, config, target, dc),
        DecodeMode::Beam => beam_search(params, config, target, dc)?
            .into_iter()
            .next()
            .ok_or_else(|| ModelError::Config("beam search returned no candidates".into())),
        DecodeMode::Rerank => {
            let mut pool = Vec::new();
            if dc.include_greedy_in_pool {
                pool.push(greedy_decode(params, config, target, dc)?);
            }
            pool.extend(beam_search(params, config, target, dc)?);
            tmm_rerank(pool, target, sim)
        }
    }
}
