//! Reverse pass through the graph built by [`forward_cached`].

use crate::batch::TokenBatch;
use crate::config::ModelConfig;
use crate::forward::{forward_cached, gelu_grad, rotate_back, sigmoid, ForwardCache, ForwardOptions, LnCache};
use crate::loss::{batch_loss, LossParts};
use crate::params::ModelParams;
use crate::tensor::{linear_backward, Tensor};
use crate::{ModelError, Result};

fn layer_norm_backward(dy: &[f64], d: usize, cache: &LnCache, g: &Tensor, dg: &mut Tensor, db: &mut Tensor) -> Vec<f64> {
    let rows = dy.len() / d;
    let mut dx = vec![0.0; dy.len()];
    let mut dxhat = vec![0.0; d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        for j in 0..d {
            dg.data[j] += dyr[j] * xh[j];
            db.data[j] += dyr[j];
            dxhat[j] = dyr[j] * g.data[j];
        }
        let m1 = dxhat.iter().sum::<f64>() / d as f64;
        let m2 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        let rs = cache.rstd[r];
        for j in 0..d {
            dx[r * d + j] = rs * (dxhat[j] - m1 - xh[j] * m2);
        }
    }
    dx
}

fn gelu_backward(dy: &mut [f64], pre: &[f64], mask: &Option<Vec<f64>>) {
    match mask {
        Some(m) => {
            for ((g, z), k) in dy.iter_mut().zip(pre).zip(m) {
                *g *= k * gelu_grad(*z);
            }
        }
        None => {
            for (g, z) in dy.iter_mut().zip(pre) {
                *g *= gelu_grad(*z);
            }
        }
    }
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

/// Gradients of the loss with respect to every parameter, given gradients
/// with respect to the logits and the post-softplus thickness outputs.
pub fn backward(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &TokenBatch,
    cache: &ForwardCache,
    dlogits: &[f64],
    dlog_thickness: &[f64],
) -> Result<ModelParams> {
    let d = config.d_model;
    let rows = cache.rows;
    let len = cache.len;
    let nb = rows / len.max(1);
    let nh = config.n_heads;
    let dh = config.head_dim();
    let half = dh / 2;
    let mut g = params.zeros_like();

    let mut dhf = linear_backward(&cache.hf, rows, &params.mat_head, dlogits, &mut g.mat_head, None);
    let mut draw: Vec<f64> = dlog_thickness.to_vec();
    for (v, z) in draw.iter_mut().zip(&cache.raw_thk) {
        *v *= sigmoid(*z);
    }
    let mut du2 = linear_backward(&cache.u2_drop, rows, &params.thk_w3, &draw, &mut g.thk_w3, Some(&mut g.thk_b3));
    gelu_backward(&mut du2, &cache.u2_pre, &cache.u2_mask);
    let mut du1 = linear_backward(&cache.u1_drop, rows, &params.thk_w2, &du2, &mut g.thk_w2, Some(&mut g.thk_b2));
    gelu_backward(&mut du1, &cache.u1_pre, &cache.u1_mask);
    let dh_thk = linear_backward(&cache.hf, rows, &params.thk_w1, &du1, &mut g.thk_w1, Some(&mut g.thk_b1));
    add_into(&mut dhf, &dh_thk);
    let mut dx = layer_norm_backward(&dhf, d, &cache.lnf, &params.lnf_g, &mut g.lnf_g, &mut g.lnf_b);

    let scale = 1.0 / (dh as f64).sqrt();
    for (layer, (blk, bc)) in params.blocks.iter().zip(&cache.blocks).enumerate().rev() {
        let gb = &mut g.blocks[layer];
        // Feed-forward.
        let mut dhid = linear_backward(&bc.h_drop, rows, &blk.w2, &dx, &mut gb.w2, Some(&mut gb.b2));
        gelu_backward(&mut dhid, &bc.h_pre, &bc.ffn_mask);
        let dc = linear_backward(&bc.c, rows, &blk.w1, &dhid, &mut gb.w1, Some(&mut gb.b1));
        let dln2 = layer_norm_backward(&dc, d, &bc.ln2, &blk.ln2_g, &mut gb.ln2_g, &mut gb.ln2_b);
        add_into(&mut dx, &dln2);

        // Attention.
        let dctx = linear_backward(&bc.ctx, rows, &blk.wo, &dx, &mut gb.wo, None);
        let mut dq = vec![0.0; rows * d];
        let mut dk = vec![0.0; rows * d];
        let mut dv = vec![0.0; rows * d];
        let mut dp = vec![0.0; len];
        for b in 0..nb {
            for h in 0..nh {
                let base = (b * nh + h) * len * len;
                let col = |r: usize| (b * len + r) * d + h * dh..(b * len + r) * d + (h + 1) * dh;
                for s in 0..len {
                    let dc_s = &dctx[col(s)];
                    let mut dot = 0.0;
                    for s2 in 0..=s {
                        let p = bc.probs[base + s * len + s2];
                        if p == 0.0 {
                            dp[s2] = 0.0;
                            continue;
                        }
                        let keep = bc.attn_mask.as_ref().map_or(1.0, |m| m[base + s * len + s2]);
                        let vr = &bc.v[col(s2)];
                        let ddrop: f64 = dc_s.iter().zip(vr).map(|(a, b)| a * b).sum();
                        let w = p * keep;
                        if w != 0.0 {
                            for (o, gv) in dv[col(s2)].iter_mut().zip(dc_s) {
                                *o += w * gv;
                            }
                        }
                        dp[s2] = ddrop * keep;
                        dot += p * dp[s2];
                    }
                    for s2 in 0..=s {
                        let p = bc.probs[base + s * len + s2];
                        if p == 0.0 {
                            continue;
                        }
                        let ds = p * (dp[s2] - dot) * scale;
                        let (qs, ks) = (col(s), col(s2));
                        for j in 0..dh {
                            dq[qs.start + j] += ds * bc.k_rot[ks.start + j];
                            dk[ks.start + j] += ds * bc.q_rot[qs.start + j];
                        }
                    }
                }
            }
        }
        for r in 0..rows {
            let cs = &cache.cos[r * half..(r + 1) * half];
            let sn = &cache.sin[r * half..(r + 1) * half];
            for h in 0..nh {
                rotate_back(&mut dq[r * d + h * dh..r * d + (h + 1) * dh], cs, sn);
                rotate_back(&mut dk[r * d + h * dh..r * d + (h + 1) * dh], cs, sn);
            }
        }
        let mut da = linear_backward(&bc.a, rows, &blk.wq, &dq, &mut gb.wq, None);
        add_into(&mut da, &linear_backward(&bc.a, rows, &blk.wk, &dk, &mut gb.wk, None));
        add_into(&mut da, &linear_backward(&bc.a, rows, &blk.wv, &dv, &mut gb.wv, None));
        let dln1 = layer_norm_backward(&da, d, &bc.ln1, &blk.ln1_g, &mut gb.ln1_g, &mut gb.ln1_b);
        add_into(&mut dx, &dln1);
    }

    // Embeddings.
    let mut dspec = vec![0.0; nb * d];
    for b in 0..nb {
        dspec[b * d..(b + 1) * d].copy_from_slice(&dx[b * len * d..(b * len + 1) * d]);
        for t in 0..batch.seq {
            let m = batch.material(b, t);
            let r = b * len + t + 1;
            add_into(&mut g.mat_emb.data[m * d..(m + 1) * d], &dx[r * d..(r + 1) * d]);
        }
    }
    linear_backward(&batch.spectra, nb, &params.spec_w, &dspec, &mut g.spec_w, Some(&mut g.spec_b));

    let mut bad = None;
    g.visit(|name, t| {
        if bad.is_none() && !t.data.iter().all(|v| v.is_finite()) {
            bad = Some(name.to_string());
        }
    });
    match bad {
        Some(name) => Err(ModelError::NonFiniteGradient(name)),
        None => Ok(g),
    }
}

/// Forward, loss and reverse pass for one teacher-forced batch.
pub fn loss_and_gradients(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &TokenBatch,
    opts: &ForwardOptions,
) -> Result<(LossParts, ModelParams)> {
    let (out, cache) = forward_cached(params, config, batch, opts)?;
    let (parts, dlogits, dthk) = batch_loss(&out, batch, config)?;
    let grads = backward(params, config, batch, &cache, &dlogits, &dthk)?;
    Ok((parts, grads))
}

/// Loss only, no gradients.
pub fn loss(params: &ModelParams, config: &ModelConfig, batch: &TokenBatch, opts: &ForwardOptions) -> Result<LossParts> {
    let out = crate::forward::forward(params, config, batch, opts)?;
    batch_loss(&out, batch, config).map(|(p, _, _)| p)
}
