//! AdamW training with a cosine learning-rate schedule.
//!
//! Everything random in a step (batch membership, dropout) is derived from
//! `(seed, step)`, so a run resumed from a checkpoint replays the same steps.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use prism_core::dataset::Sample;
use prism_core::rng::stream_rng;

use crate::backward::loss_and_gradients;
use crate::batch::TokenBatch;
use crate::checkpoint::Checkpoint;
use crate::config::ModelConfig;
use crate::forward::ForwardOptions;
use crate::params::ModelParams;
use crate::{ModelError, Result};

const SHUFFLE_TAG: u64 = 0x7368_7566;
const DROPOUT_TAG: u64 = 0x6472_6f70;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 64,
            lr_max: 1e-3,
            lr_min: 1e-5,
            warmup_steps: 0,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.98,
            adam_eps: 1e-9,
            grad_clip: Some(1.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::Config(m.into()));
        if self.steps == 0 || self.batch_size == 0 {
            return bad("steps and batch_size must be positive");
        }
        if !(self.lr_max > 0.0 && self.lr_min >= 0.0 && self.lr_min <= self.lr_max) {
            return bad("need 0 <= lr_min <= lr_max, lr_max > 0");
        }
        if self.warmup_steps >= self.steps {
            return bad("warmup_steps must be below steps");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_eps <= 0.0 {
            return bad("betas must lie in [0, 1) and adam_eps be positive");
        }
        if self.weight_decay < 0.0 || self.grad_clip.is_some_and(|c| c <= 0.0) {
            return bad("weight_decay must be >= 0 and grad_clip > 0");
        }
        Ok(())
    }

    /// Learning rate used at 0-based `step`. Linear warmup, then cosine from
    /// `lr_max` down to exactly `lr_min` at `steps - 1`.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.lr_max * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.steps.saturating_sub(self.warmup_steps + 1);
        let progress = if span == 0 {
            1.0
        } else {
            ((step - self.warmup_steps) as f64 / span as f64).min(1.0)
        };
        if progress >= 1.0 {
            return self.lr_min;
        }
        self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + (PI * progress).cos())
    }
}

/// Sample indices used at `step`: consecutive slices of per-epoch
/// permutations seeded by `(seed, epoch)`.
pub fn batch_indices(seed: u64, step: usize, batch_size: usize, n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(batch_size);
    let mut pos = step * batch_size;
    let mut cached: Option<(usize, Vec<usize>)> = None;
    while out.len() < batch_size {
        let epoch = pos / n;
        if cached.as_ref().map(|c| c.0) != Some(epoch) {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut stream_rng(seed ^ SHUFFLE_TAG, epoch as u64));
            cached = Some((epoch, perm));
        }
        out.push(cached.as_ref().unwrap().1[pos % n]);
        pos += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
}

/// One row of the loss trace; losses are per non-PAD token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub lr: f64,
    pub mat_loss: f64,
    pub thk_loss: f64,
    pub total: f64,
}

pub const TRACE_HEADER: &str = "step,lr,mat_loss,thk_loss,total";

impl TraceRow {
    pub fn csv(&self) -> String {
        format!("{},{},{},{},{}", self.step, self.lr, self.mat_loss, self.thk_loss, self.total)
    }
}

pub fn write_trace(path: impl AsRef<Path>, rows: &[TraceRow]) -> Result<()> {
    let path = path.as_ref();
    let io = |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(f, "{TRACE_HEADER}").map_err(io)?;
    for r in rows {
        writeln!(f, "{}", r.csv()).map_err(io)?;
    }
    f.flush().map_err(io)
}

pub struct Trainer {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub params: ModelParams,
    pub adam: AdamState,
    /// Steps completed so far.
    pub step: usize,
    pub trace: Vec<TraceRow>,
    pub last_checkpoint: Option<PathBuf>,
}

impl Trainer {
    pub fn new(model: ModelConfig, train: TrainConfig, params: ModelParams) -> Result<Self> {
        model.validate()?;
        train.validate()?;
        let zeros = params.zeros_like();
        Ok(Self {
            model,
            train,
            adam: AdamState {
                m: zeros.clone(),
                v: zeros,
            },
            params,
            step: 0,
            trace: Vec::new(),
            last_checkpoint: None,
        })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let mut t = Self::new(ck.model, ck.train, ck.params)?;
        t.step = ck.step;
        if let Some(adam) = ck.adam {
            t.adam = adam;
        }
        Ok(t)
    }

    pub fn checkpoint(&self, manifest_hash: &str) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            train: self.train.clone(),
            step: self.step,
            manifest_hash: manifest_hash.to_string(),
            params: self.params.clone(),
            adam: Some(self.adam.clone()),
        }
    }

    pub fn save_checkpoint(&mut self, dir: impl AsRef<Path>, manifest_hash: &str) -> Result<()> {
        self.checkpoint(manifest_hash).save(dir.as_ref())?;
        self.last_checkpoint = Some(dir.as_ref().to_path_buf());
        Ok(())
    }

    pub fn done(&self) -> bool {
        self.step >= self.train.steps
    }

    /// Runs one optimisation step on `data`.
    pub fn step(&mut self, data: &[Sample]) -> Result<TraceRow> {
        if data.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let step = self.step;
        let idx = batch_indices(self.train.seed, step, self.train.batch_size, data.len());
        let batch = TokenBatch::from_samples(idx.iter().map(|&i| (&data[i].design, &data[i].spectrum)))?;
        let opts = ForwardOptions::train(self.train.seed ^ DROPOUT_TAG, step as u64);
        let last = self.last_checkpoint.clone();
        let diverged = |_| ModelError::Diverged {
            step,
            last_checkpoint: last.clone(),
        };
        let (parts, mut grads) = loss_and_gradients(&self.params, &self.model, &batch, &opts).map_err(|e| match e {
            ModelError::NonFinite { .. } | ModelError::NonFiniteGradient(_) => diverged(()),
            e => e,
        })?;
        if !parts.total.is_finite() {
            return Err(diverged(()));
        }
        if let Some(clip) = self.train.grad_clip {
            let norm = grads.flatten().iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > clip {
                let s = clip / norm;
                grads.visit_mut(|_, t| t.data.iter_mut().for_each(|g| *g *= s));
            }
        }
        let lr = self.train.lr_at(step);
        self.apply_adamw(&grads, lr);
        if !self.params.is_finite() {
            return Err(diverged(()));
        }
        self.step += 1;
        let n = parts.n_tokens as f64;
        let row = TraceRow {
            step,
            lr,
            mat_loss: parts.material / n,
            thk_loss: parts.thickness / n,
            total: parts.total,
        };
        self.trace.push(row);
        Ok(row)
    }

    fn apply_adamw(&mut self, grads: &ModelParams, lr: f64) {
        let c = &self.train;
        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2, eps, wd) = (c.beta1, c.beta2, c.adam_eps, c.weight_decay);
        let mut gs = Vec::new();
        grads.visit(|_, g| gs.push(g));
        let mut i = 0;
        let (m_all, v_all) = (&mut self.adam.m, &mut self.adam.v);
        let mut m_list = Vec::new();
        m_all.visit_mut(|_, m| m_list.push(std::mem::take(&mut m.data)));
        let mut v_list = Vec::new();
        v_all.visit_mut(|_, v| v_list.push(std::mem::take(&mut v.data)));
        self.params.visit_mut(|name, p| {
            let g = &gs[i].data;
            let (m, v) = (&mut m_list[i], &mut v_list[i]);
            // Decay matrices only; norms, biases and embeddings are exempt.
            let decay = p.shape.len() == 2 && name != "mat_emb";
            for j in 0..p.data.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                let update = (m[j] / bc1) / ((v[j] / bc2).sqrt() + eps);
                let w = if decay { wd * p.data[j] } else { 0.0 };
                p.data[j] -= lr * (update + w);
            }
            i += 1;
        });
        let mut it = m_list.into_iter();
        m_all.visit_mut(|_, m| m.data = it.next().unwrap());
        let mut it = v_list.into_iter();
        v_all.visit_mut(|_, v| v.data = it.next().unwrap());
    }

    /// Steps until `steps` are done; `on_step` sees each trace row and may
    /// write checkpoints.
    pub fn run(&mut self, data: &[Sample], mut on_step: impl FnMut(&mut Self, &TraceRow) -> Result<()>) -> Result<()> {
        while !self.done() {
            let row = self.step(data)?;
            on_step(self, &row)?;
        }
        Ok(())
    }
}
