use rand_distr::{Distribution, Normal};

use prism_core::rng::{stream_rng, Rng};

use crate::config::ModelConfig;
use crate::tensor::Tensor;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub ln1_g: Tensor,
    pub ln1_b: Tensor,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub ln2_g: Tensor,
    pub ln2_b: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// All learnable weights. Matrices are stored `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub spec_w: Tensor,
    pub spec_b: Tensor,
    pub mat_emb: Tensor,
    pub blocks: Vec<BlockParams>,
    pub lnf_g: Tensor,
    pub lnf_b: Tensor,
    pub mat_head: Tensor,
    pub thk_w1: Tensor,
    pub thk_b1: Tensor,
    pub thk_w2: Tensor,
    pub thk_b2: Tensor,
    pub thk_w3: Tensor,
    pub thk_b3: Tensor,
}

fn normal(rng: &mut Rng, shape: &[usize], std: f64) -> Tensor {
    let dist = Normal::new(0.0, std).unwrap();
    let mut t = Tensor::zeros(shape);
    for v in &mut t.data {
        *v = dist.sample(rng);
    }
    t
}

impl ModelParams {
    /// Scaled-normal init: projections with variance 1/fan_in, embeddings with
    /// std 0.02, block output projections at zero, norms at identity.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, 0x1417);
        let d = config.d_model;
        let v = config.vocab_size;
        let [h1, h2] = config.thk_hidden;
        let proj = |rng: &mut Rng, fan_in: usize, fan_out: usize| {
            normal(rng, &[fan_in, fan_out], (1.0 / fan_in as f64).sqrt())
        };
        let spec_w = proj(&mut rng, config.spectrum_dim, d);
        let mat_emb = normal(&mut rng, &[v, d], 0.02);
        let blocks = (0..config.n_layers)
            .map(|_| BlockParams {
                ln1_g: Tensor::filled(&[d], 1.0),
                ln1_b: Tensor::zeros(&[d]),
                wq: proj(&mut rng, d, d),
                wk: proj(&mut rng, d, d),
                wv: proj(&mut rng, d, d),
                wo: Tensor::zeros(&[d, d]),
                ln2_g: Tensor::filled(&[d], 1.0),
                ln2_b: Tensor::zeros(&[d]),
                w1: proj(&mut rng, d, config.d_ff),
                b1: Tensor::zeros(&[config.d_ff]),
                w2: Tensor::zeros(&[config.d_ff, d]),
                b2: Tensor::zeros(&[d]),
            })
            .collect();
        Ok(Self {
            spec_w,
            spec_b: Tensor::zeros(&[d]),
            mat_emb,
            blocks,
            lnf_g: Tensor::filled(&[d], 1.0),
            lnf_b: Tensor::zeros(&[d]),
            mat_head: proj(&mut rng, d, v),
            thk_w1: proj(&mut rng, d, h1),
            thk_b1: Tensor::zeros(&[h1]),
            thk_w2: proj(&mut rng, h1, h2),
            thk_b2: Tensor::zeros(&[h2]),
            thk_w3: proj(&mut rng, h2, v),
            thk_b3: Tensor::zeros(&[v]),
        })
    }

    /// Same shapes, all zeros (gradient / optimizer buffers).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(|_, t| t.data.iter_mut().for_each(|v| *v = 0.0));
        z
    }

    /// Visits every tensor in a fixed order with its dotted name.
    pub fn visit<'a>(&'a self, mut f: impl FnMut(&str, &'a Tensor)) {
        f("spec_w", &self.spec_w);
        f("spec_b", &self.spec_b);
        f("mat_emb", &self.mat_emb);
        for (i, b) in self.blocks.iter().enumerate() {
            for (name, t) in [
                ("ln1_g", &b.ln1_g),
                ("ln1_b", &b.ln1_b),
                ("wq", &b.wq),
                ("wk", &b.wk),
                ("wv", &b.wv),
                ("wo", &b.wo),
                ("ln2_g", &b.ln2_g),
                ("ln2_b", &b.ln2_b),
                ("w1", &b.w1),
                ("b1", &b.b1),
                ("w2", &b.w2),
                ("b2", &b.b2),
            ] {
                f(&format!("blocks.{i}.{name}"), t);
            }
        }
        f("lnf_g", &self.lnf_g);
        f("lnf_b", &self.lnf_b);
        f("mat_head", &self.mat_head);
        f("thk_w1", &self.thk_w1);
        f("thk_b1", &self.thk_b1);
        f("thk_w2", &self.thk_w2);
        f("thk_b2", &self.thk_b2);
        f("thk_w3", &self.thk_w3);
        f("thk_b3", &self.thk_b3);
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor)) {
        f("spec_w", &mut self.spec_w);
        f("spec_b", &mut self.spec_b);
        f("mat_emb", &mut self.mat_emb);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            for (name, t) in [
                ("ln1_g", &mut b.ln1_g),
                ("ln1_b", &mut b.ln1_b),
                ("wq", &mut b.wq),
                ("wk", &mut b.wk),
                ("wv", &mut b.wv),
                ("wo", &mut b.wo),
                ("ln2_g", &mut b.ln2_g),
                ("ln2_b", &mut b.ln2_b),
                ("w1", &mut b.w1),
                ("b1", &mut b.b1),
                ("w2", &mut b.w2),
                ("b2", &mut b.b2),
            ] {
                f(&format!("blocks.{i}.{name}"), t);
            }
        }
        f("lnf_g", &mut self.lnf_g);
        f("lnf_b", &mut self.lnf_b);
        f("mat_head", &mut self.mat_head);
        f("thk_w1", &mut self.thk_w1);
        f("thk_b1", &mut self.thk_b1);
        f("thk_w2", &mut self.thk_w2);
        f("thk_b2", &mut self.thk_b2);
        f("thk_w3", &mut self.thk_w3);
        f("thk_b3", &mut self.thk_b3);
    }

    /// Applies `f(self_tensor, other_tensor)` pairwise over two parameter sets
    /// with identical shapes.
    pub fn zip_mut(&mut self, other: &ModelParams, mut f: impl FnMut(&str, &mut Tensor, &Tensor)) {
        let mut others = Vec::new();
        other.visit(|_, t| others.push(t));
        let mut i = 0;
        self.visit_mut(|name, t| {
            f(name, t, others[i]);
            i += 1;
        });
    }

    pub fn count(&self) -> usize {
        let mut n = 0;
        self.visit(|_, t| n += t.len());
        n
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(|_, t| ok &= t.data.iter().all(|v| v.is_finite()));
        ok
    }

    pub fn names_and_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit(|n, t| out.push((n.to_string(), t.shape.clone())));
        out
    }

    /// Flattened copy of every parameter in visit order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count());
        self.visit(|_, t| out.extend_from_slice(&t.data));
        out
    }

    pub fn unflatten(&mut self, flat: &[f64]) {
        let mut off = 0;
        self.visit_mut(|_, t| {
            let n = t.len();
            t.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        });
    }

    /// Scalar `index` of the flattened view.
    pub fn scalar(&self, index: usize) -> f64 {
        let mut value = f64::NAN;
        let mut off = 0;
        self.visit(|_, t| {
            if (off..off + t.len()).contains(&index) {
                value = t.data[index - off];
            }
            off += t.len();
        });
        value
    }

    pub fn set_scalar(&mut self, index: usize, value: f64) {
        let mut off = 0;
        self.visit_mut(|_, t| {
            if (off..off + t.len()).contains(&index) {
                t.data[index - off] = value;
            }
            off += t.len();
        });
    }

    /// Flattened offset of the first scalar of tensor `name`.
    pub fn offset_of(&self, name: &str) -> Option<usize> {
        let mut found = None;
        let mut off = 0;
        self.visit(|n, t| {
            if found.is_none() && n == name {
                found = Some(off);
            }
            off += t.len();
        });
        found
    }

    /// Name of the tensor holding flattened scalar `index`.
    pub fn name_of(&self, index: usize) -> String {
        let mut name = String::new();
        let mut off = 0;
        self.visit(|n, t| {
            if name.is_empty() && index < off + t.len() {
                name = n.to_string();
            }
            off += t.len();
        });
        name
    }
}
