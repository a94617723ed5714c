//! Forward pass.
//!
//! Rows are laid out `b * (seq + 1) + s` where `s = 0` is the spectrum token
//! and `s = t + 1` is material token `t`. Output row `s` predicts token `s`
//! of the batch (the next layer, or EOS).

use rand::Rng as _;

use prism_core::materials::PAD;
use prism_core::rng::{stream_rng, Rng};

use crate::batch::TokenBatch;
use crate::config::ModelConfig;
use crate::params::{BlockParams, ModelParams};
use crate::tensor::linear;
use crate::{ModelError, Result};

pub(crate) const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    /// Enables dropout.
    pub train: bool,
    pub dropout_seed: u64,
    pub dropout_stream: u64,
    /// Constant added to every position, the spectrum token's included.
    pub position_offset: f64,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self::eval()
    }
}

impl ForwardOptions {
    pub fn eval() -> Self {
        Self {
            train: false,
            dropout_seed: 0,
            dropout_stream: 0,
            position_offset: 0.0,
        }
    }

    pub fn train(seed: u64, stream: u64) -> Self {
        Self {
            train: true,
            dropout_seed: seed,
            dropout_stream: stream,
            position_offset: 0.0,
        }
    }
}

/// Head outputs at every row: material logits and post-softplus log-space
/// thicknesses, each `batch × (seq + 1) × vocab`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub batch: usize,
    pub len: usize,
    pub vocab: usize,
    pub logits: Vec<f64>,
    pub log_thickness: Vec<f64>,
}

impl ModelOutput {
    pub fn logits_at(&self, b: usize, s: usize) -> &[f64] {
        let o = (b * self.len + s) * self.vocab;
        &self.logits[o..o + self.vocab]
    }

    pub fn log_thickness_at(&self, b: usize, s: usize) -> &[f64] {
        let o = (b * self.len + s) * self.vocab;
        &self.log_thickness[o..o + self.vocab]
    }
}

pub(crate) struct LnCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub(crate) struct BlockCache {
    pub ln1: LnCache,
    pub a: Vec<f64>,
    pub q_rot: Vec<f64>,
    pub k_rot: Vec<f64>,
    pub v: Vec<f64>,
    /// Pre-softmax scores per (b, h), `S × S`, `-inf` where masked.
    pub scores: Vec<f64>,
    pub probs: Vec<f64>,
    pub attn_mask: Option<Vec<f64>>,
    pub ctx: Vec<f64>,
    pub x_mid: Vec<f64>,
    pub ln2: LnCache,
    pub c: Vec<f64>,
    pub h_pre: Vec<f64>,
    pub ffn_mask: Option<Vec<f64>>,
    pub h_drop: Vec<f64>,
}

/// Activations kept for the reverse pass.
pub struct ForwardCache {
    pub(crate) rows: usize,
    pub(crate) len: usize,
    pub(crate) key_valid: Vec<bool>,
    pub(crate) cos: Vec<f64>,
    pub(crate) sin: Vec<f64>,
    pub(crate) blocks: Vec<BlockCache>,
    pub(crate) lnf: LnCache,
    pub(crate) hf: Vec<f64>,
    pub(crate) u1_pre: Vec<f64>,
    pub(crate) u1_mask: Option<Vec<f64>>,
    pub(crate) u1_drop: Vec<f64>,
    pub(crate) u2_pre: Vec<f64>,
    pub(crate) u2_mask: Option<Vec<f64>>,
    pub(crate) u2_drop: Vec<f64>,
    pub(crate) raw_thk: Vec<f64>,
}

impl ForwardCache {
    /// Pre-softmax attention scores of every layer, each laid out
    /// `[b][h][query][key]`; masked entries are `-inf`.
    pub fn attention_logits(&self) -> Vec<&[f64]> {
        self.blocks.iter().map(|b| b.scores.as_slice()).collect()
    }
}

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn layer_norm(x: &[f64], d: usize, g: &[f64], b: &[f64]) -> (Vec<f64>, LnCache) {
    let rows = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for j in 0..d {
            let h = (row[j] - mean) * rs;
            xhat[r * d + j] = h;
            y[r * d + j] = h * g[j] + b[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

/// Rotary frequencies `base^(-2i/head_dim)` for each pair `i`.
pub fn rope_frequencies(head_dim: usize, base: f64) -> Vec<f64> {
    (0..head_dim / 2)
        .map(|i| base.powf(-(2.0 * i as f64) / head_dim as f64))
        .collect()
}

/// Rotates consecutive pairs `(x[2i], x[2i+1])` by `angle_i`.
pub(crate) fn rotate(x: &mut [f64], cos: &[f64], sin: &[f64]) {
    for i in 0..cos.len() {
        let (a, b) = (x[2 * i], x[2 * i + 1]);
        x[2 * i] = a * cos[i] - b * sin[i];
        x[2 * i + 1] = a * sin[i] + b * cos[i];
    }
}

/// Inverse rotation (transpose), used by the reverse pass.
pub(crate) fn rotate_back(x: &mut [f64], cos: &[f64], sin: &[f64]) {
    for i in 0..cos.len() {
        let (a, b) = (x[2 * i], x[2 * i + 1]);
        x[2 * i] = a * cos[i] + b * sin[i];
        x[2 * i + 1] = -a * sin[i] + b * cos[i];
    }
}

/// Applies rotary embedding to a set of head vectors (`vectors.len() =
/// positions.len() × head_dim`). Position `p` nm rotates pair `i` by
/// `(p / depth_scale) · base^(-2i/head_dim)`.
pub fn rope_apply(vectors: &[f64], positions: &[f64], base: f64, depth_scale: f64) -> Vec<f64> {
    let head_dim = vectors.len() / positions.len().max(1);
    let freqs = rope_frequencies(head_dim, base);
    let mut out = vectors.to_vec();
    for (p, v) in positions.iter().zip(out.chunks_mut(head_dim)) {
        let (cos, sin): (Vec<f64>, Vec<f64>) = freqs.iter().map(|f| ((p / depth_scale) * f).sin_cos()).map(|(s, c)| (c, s)).unzip();
        rotate(v, &cos, &sin);
    }
    out
}

fn dropout_mask(rng: &mut Rng, n: usize, p: f64) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect()
}

fn apply_mask(x: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        for (v, k) in x.iter_mut().zip(m) {
            *v *= k;
        }
    }
}

fn check_finite(x: &[f64], stage: &'static str, layer: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite { stage, layer })
    }
}

/// Spectrum projection at row 0 of each sequence, material embeddings after.
/// Thickness does not enter here.
pub fn embed(params: &ModelParams, config: &ModelConfig, batch: &TokenBatch) -> Result<Vec<f64>> {
    let d = config.d_model;
    let len = batch.seq + 1;
    let mut x = vec![0.0; batch.batch * len * d];
    if batch.batch == 0 {
        return Ok(x);
    }
    let spec = linear(&batch.spectra, batch.batch, &params.spec_w, Some(&params.spec_b));
    for b in 0..batch.batch {
        let row0 = b * len;
        x[row0 * d..(row0 + 1) * d].copy_from_slice(&spec[b * d..(b + 1) * d]);
        for t in 0..batch.seq {
            let m = batch.material(b, t);
            let r = row0 + t + 1;
            x[r * d..(r + 1) * d].copy_from_slice(params.mat_emb.row(m));
        }
    }
    Ok(x)
}

fn attention(
    blk: &BlockParams,
    config: &ModelConfig,
    x: &[f64],
    cache: &ForwardCache,
    rng: &mut Option<Rng>,
) -> (Vec<f64>, BlockCache) {
    let d = config.d_model;
    let rows = cache.rows;
    let len = cache.len;
    let nb = rows / len;
    let nh = config.n_heads;
    let dh = config.head_dim();
    let half = dh / 2;
    let (a, ln1) = layer_norm(x, d, &blk.ln1_g.data, &blk.ln1_b.data);
    let mut q = linear(&a, rows, &blk.wq, None);
    let mut k = linear(&a, rows, &blk.wk, None);
    let v = linear(&a, rows, &blk.wv, None);
    for r in 0..rows {
        let cs = &cache.cos[r * half..(r + 1) * half];
        let sn = &cache.sin[r * half..(r + 1) * half];
        for h in 0..nh {
            rotate(&mut q[r * d + h * dh..r * d + (h + 1) * dh], cs, sn);
            rotate(&mut k[r * d + h * dh..r * d + (h + 1) * dh], cs, sn);
        }
    }
    let scale = 1.0 / (dh as f64).sqrt();
    let mut scores = vec![f64::NEG_INFINITY; nb * nh * len * len];
    let mut probs = vec![0.0; nb * nh * len * len];
    for b in 0..nb {
        for h in 0..nh {
            let base = (b * nh + h) * len * len;
            for s in 0..len {
                let qr = &q[(b * len + s) * d + h * dh..(b * len + s) * d + (h + 1) * dh];
                let mut max = f64::NEG_INFINITY;
                for s2 in 0..=s {
                    if !cache.key_valid[b * len + s2] {
                        continue;
                    }
                    let kr = &k[(b * len + s2) * d + h * dh..(b * len + s2) * d + (h + 1) * dh];
                    let sc = qr.iter().zip(kr).map(|(x, y)| x * y).sum::<f64>() * scale;
                    scores[base + s * len + s2] = sc;
                    max = max.max(sc);
                }
                let mut z = 0.0;
                for s2 in 0..=s {
                    let sc = scores[base + s * len + s2];
                    if sc > f64::NEG_INFINITY {
                        let e = (sc - max).exp();
                        probs[base + s * len + s2] = e;
                        z += e;
                    }
                }
                for s2 in 0..=s {
                    probs[base + s * len + s2] /= z;
                }
            }
        }
    }
    let attn_mask = rng.as_mut().map(|r| dropout_mask(r, probs.len(), config.dropout));
    let mut dropped = probs.clone();
    apply_mask(&mut dropped, &attn_mask);
    let mut ctx = vec![0.0; rows * d];
    for b in 0..nb {
        for h in 0..nh {
            let base = (b * nh + h) * len * len;
            for s in 0..len {
                let out = &mut ctx[(b * len + s) * d + h * dh..(b * len + s) * d + (h + 1) * dh];
                for s2 in 0..=s {
                    let p = dropped[base + s * len + s2];
                    if p == 0.0 {
                        continue;
                    }
                    let vr = &v[(b * len + s2) * d + h * dh..(b * len + s2) * d + (h + 1) * dh];
                    for (o, vv) in out.iter_mut().zip(vr) {
                        *o += p * vv;
                    }
                }
            }
        }
    }
    let proj = linear(&ctx, rows, &blk.wo, None);
    let x_mid: Vec<f64> = x.iter().zip(&proj).map(|(a, b)| a + b).collect();
    let cache_blk = BlockCache {
        ln1,
        a,
        q_rot: q,
        k_rot: k,
        v,
        scores,
        probs,
        attn_mask,
        ctx,
        x_mid: Vec::new(),
        ln2: LnCache {
            xhat: Vec::new(),
            rstd: Vec::new(),
        },
        c: Vec::new(),
        h_pre: Vec::new(),
        ffn_mask: None,
        h_drop: Vec::new(),
    };
    (x_mid, cache_blk)
}

/// Full forward pass, keeping activations for [`crate::backward::backward`].
pub fn forward_cached(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &TokenBatch,
    opts: &ForwardOptions,
) -> Result<(ModelOutput, ForwardCache)> {
    batch.validate(config.vocab_size, config.spectrum_dim)?;
    if batch.seq + 1 > config.max_seq_len {
        return Err(ModelError::Shape(format!(
            "sequence of {} tokens exceeds max_seq_len {}",
            batch.seq + 1,
            config.max_seq_len
        )));
    }
    let d = config.d_model;
    let len = batch.seq + 1;
    let rows = batch.batch * len;
    let v = config.vocab_size;
    let half = config.head_dim() / 2;
    let mut rng = (opts.train && config.dropout > 0.0).then(|| stream_rng(opts.dropout_seed, opts.dropout_stream));

    let freqs = rope_frequencies(config.head_dim(), config.rope_base);
    let mut cos = vec![0.0; rows * half];
    let mut sin = vec![0.0; rows * half];
    let mut key_valid = vec![true; rows];
    for b in 0..batch.batch {
        let pos = batch.positions(b);
        for (s, p) in pos.iter().enumerate() {
            let r = b * len + s;
            let units = (p + opts.position_offset) / config.rope_depth_scale;
            for (i, f) in freqs.iter().enumerate() {
                let (sn, cs) = (units * f).sin_cos();
                cos[r * half + i] = cs;
                sin[r * half + i] = sn;
            }
            if s > 0 {
                key_valid[r] = batch.material(b, s - 1) != PAD;
            }
        }
    }

    let mut cache = ForwardCache {
        rows,
        len,
        key_valid,
        cos,
        sin,
        blocks: Vec::with_capacity(config.n_layers),
        lnf: LnCache {
            xhat: Vec::new(),
            rstd: Vec::new(),
        },
        hf: Vec::new(),
        u1_pre: Vec::new(),
        u1_mask: None,
        u1_drop: Vec::new(),
        u2_pre: Vec::new(),
        u2_mask: None,
        u2_drop: Vec::new(),
        raw_thk: Vec::new(),
    };

    let mut x = embed(params, config, batch)?;
    check_finite(&x, "embedding", 0)?;
    for (layer, blk) in params.blocks.iter().enumerate() {
        let (x_mid, mut bc) = attention(blk, config, &x, &cache, &mut rng);
        check_finite(&x_mid, "attention", layer)?;
        let (c, ln2) = layer_norm(&x_mid, d, &blk.ln2_g.data, &blk.ln2_b.data);
        let h_pre = linear(&c, rows, &blk.w1, Some(&blk.b1));
        let mut h_drop: Vec<f64> = h_pre.iter().map(|&z| gelu(z)).collect();
        let ffn_mask = rng.as_mut().map(|r| dropout_mask(r, h_drop.len(), config.dropout));
        apply_mask(&mut h_drop, &ffn_mask);
        let f = linear(&h_drop, rows, &blk.w2, Some(&blk.b2));
        x = x_mid.iter().zip(&f).map(|(a, b)| a + b).collect();
        check_finite(&x, "feed-forward", layer)?;
        bc.x_mid = x_mid;
        bc.ln2 = ln2;
        bc.c = c;
        bc.h_pre = h_pre;
        bc.ffn_mask = ffn_mask;
        bc.h_drop = h_drop;
        cache.blocks.push(bc);
    }

    let (hf, lnf) = layer_norm(&x, d, &params.lnf_g.data, &params.lnf_b.data);
    let logits = linear(&hf, rows, &params.mat_head, None);
    let u1_pre = linear(&hf, rows, &params.thk_w1, Some(&params.thk_b1));
    let mut u1: Vec<f64> = u1_pre.iter().map(|&z| gelu(z)).collect();
    let u1_mask = rng.as_mut().map(|r| dropout_mask(r, u1.len(), config.dropout));
    apply_mask(&mut u1, &u1_mask);
    let u2_pre = linear(&u1, rows, &params.thk_w2, Some(&params.thk_b2));
    let mut u2: Vec<f64> = u2_pre.iter().map(|&z| gelu(z)).collect();
    let u2_mask = rng.as_mut().map(|r| dropout_mask(r, u2.len(), config.dropout));
    apply_mask(&mut u2, &u2_mask);
    let raw_thk = linear(&u2, rows, &params.thk_w3, Some(&params.thk_b3));
    let log_thickness: Vec<f64> = raw_thk.iter().map(|&z| softplus(z)).collect();
    check_finite(&logits, "material head", config.n_layers)?;
    check_finite(&log_thickness, "thickness head", config.n_layers)?;

    cache.lnf = lnf;
    cache.hf = hf;
    cache.u1_pre = u1_pre;
    cache.u1_mask = u1_mask;
    cache.u1_drop = u1;
    cache.u2_pre = u2_pre;
    cache.u2_mask = u2_mask;
    cache.u2_drop = u2;
    cache.raw_thk = raw_thk;
    debug_assert_eq!(logits.len(), rows * v);
    Ok((
        ModelOutput {
            batch: batch.batch,
            len,
            vocab: v,
            logits,
            log_thickness,
        },
        cache,
    ))
}

/// Forward pass without keeping activations.
pub fn forward(params: &ModelParams, config: &ModelConfig, batch: &TokenBatch, opts: &ForwardOptions) -> Result<ModelOutput> {
    forward_cached(params, config, batch, opts).map(|(o, _)| o)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rope_identity_at_origin() {
        let v: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
        assert_eq!(rope_apply(&v, &[0.0], 10_000.0, 10.0), v);
    }

    #[test]
    fn gelu_derivative_matches_difference_quotient() {
        for x in [-3.0, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
