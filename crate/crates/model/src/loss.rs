//! Training objective: label-smoothed KL over materials plus log-space
//! thickness regression, normalised by the number of non-PAD targets.

use prism_core::materials::{NUM_MATERIALS, PAD};

use crate::batch::TokenBatch;
use crate::config::ModelConfig;
use crate::forward::ModelOutput;
use crate::{ModelError, Result};

/// Smoothed target distribution: `1 - eps` on `target`, `eps / (V - 2)` on
/// every other class except PAD, which gets nothing.
pub fn smoothed_target(target: usize, vocab: usize, eps: f64) -> Vec<f64> {
    let off = eps / (vocab - 2) as f64;
    (0..vocab)
        .map(|i| {
            if i == target {
                1.0 - eps
            } else if i == PAD {
                0.0
            } else {
                off
            }
        })
        .collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Log-probabilities of one row of logits.
pub fn log_probs(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits)
}

/// KL(p̃ ‖ softmax(z)) for one position.
pub fn smoothed_kl(logits: &[f64], target: usize, eps: f64) -> f64 {
    let lp = log_softmax(logits);
    smoothed_target(target, logits.len(), eps)
        .iter()
        .zip(&lp)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, l)| p * (p.ln() - l))
        .sum()
}

/// Sum of [`smoothed_kl`] over positions with `mask` set. `logits` is
/// `targets.len() × vocab`.
pub fn material_loss(logits: &[f64], targets: &[usize], eps: f64, mask: &[bool]) -> f64 {
    let v = logits.len() / targets.len().max(1);
    targets
        .iter()
        .zip(mask)
        .enumerate()
        .filter(|(_, (_, m))| **m)
        .map(|(i, (&y, _))| smoothed_kl(&logits[i * v..(i + 1) * v], y, eps))
        .sum()
}

/// Sum over masked positions of `(d̃[y] - ln(d / thk_min))²`, gathered at the
/// ground-truth material `y`.
pub fn thickness_loss(pred: &[f64], materials: &[usize], thicknesses: &[f64], thk_min: f64, mask: &[bool]) -> f64 {
    let v = pred.len() / materials.len().max(1);
    (0..materials.len())
        .filter(|&i| mask[i])
        .map(|i| (pred[i * v + materials[i]] - (thicknesses[i] / thk_min).ln()).powi(2))
        .sum()
}

/// `(mat + alpha·thk) / n`.
pub fn total_loss(mat_loss: f64, thk_loss: f64, alpha: f64, n_nonpad: usize) -> Result<f64> {
    if n_nonpad == 0 {
        return Err(ModelError::EmptyBatch);
    }
    Ok((mat_loss + alpha * thk_loss) / n_nonpad as f64)
}

/// Thickness in nm for `material` from one row of log-space head outputs.
pub fn thickness_from_head(log_thickness: &[f64], material: usize, thk_min: f64) -> Result<f64> {
    if material >= NUM_MATERIALS {
        return Err(ModelError::SpecialToken(material));
    }
    Ok(thk_min * log_thickness[material].exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    /// Summed material KL.
    pub material: f64,
    /// Summed thickness squared error.
    pub thickness: f64,
    pub total: f64,
    pub n_tokens: usize,
}

/// Loss of a teacher-forced batch with its gradients with respect to the
/// logits and log-space thickness outputs (both `rows × vocab`).
///
/// Output row `s` is scored against batch token `s`; the last row has no
/// target. Thickness is scored on real layers only, EOS has no thickness.
pub fn batch_loss(output: &ModelOutput, batch: &TokenBatch, config: &ModelConfig) -> Result<(LossParts, Vec<f64>, Vec<f64>)> {
    let v = output.vocab;
    let n = batch.non_pad();
    if n == 0 {
        return Err(ModelError::EmptyBatch);
    }
    let inv_n = 1.0 / n as f64;
    let mut dlogits = vec![0.0; output.logits.len()];
    let mut dthk = vec![0.0; output.log_thickness.len()];
    let (mut mat, mut thk) = (0.0, 0.0);
    for b in 0..batch.batch {
        for s in 0..batch.seq {
            let y = batch.material(b, s);
            if y == PAD {
                continue;
            }
            let r = b * output.len + s;
            let z = &output.logits[r * v..(r + 1) * v];
            let lp = log_softmax(z);
            let p = smoothed_target(y, v, config.label_smooth_eps);
            for i in 0..v {
                if p[i] > 0.0 {
                    mat += p[i] * (p[i].ln() - lp[i]);
                }
                dlogits[r * v + i] = (lp[i].exp() - p[i]) * inv_n;
            }
            if y < NUM_MATERIALS {
                let diff = output.log_thickness[r * v + y] - (batch.thickness(b, s) / config.thk_min).ln();
                thk += diff * diff;
                dthk[r * v + y] = 2.0 * config.alpha * diff * inv_n;
            }
        }
    }
    let total = total_loss(mat, thk, config.alpha, n)?;
    Ok((
        LossParts {
            material: mat,
            thickness: thk,
            total,
            n_tokens: n,
        },
        dlogits,
        dthk,
    ))
}
