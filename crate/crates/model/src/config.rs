use serde::{Deserialize, Serialize};

use prism_core::materials::VOCAB_SIZE;

use crate::{ModelError, Result};

/// Model hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub dropout: f64,
    /// Smallest thickness the head can emit, nm.
    pub thk_min: f64,
    pub label_smooth_eps: f64,
    /// Thickness loss weight.
    pub alpha: f64,
    pub vocab_size: usize,
    /// Longest token sequence (SPEC + layers + EOS).
    pub max_seq_len: usize,
    pub rope_base: f64,
    /// nm per rotary position unit.
    pub rope_depth_scale: f64,
    /// Hidden widths of the two-layer thickness MLP.
    pub thk_hidden: [usize; 2],
    /// Length of the conditioning spectrum.
    pub spectrum_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Small configuration that trains on one CPU core.
    pub fn desk() -> Self {
        Self {
            d_model: 64,
            n_heads: 2,
            n_layers: 2,
            d_ff: 256,
            dropout: 0.0,
            thk_min: 10.0,
            label_smooth_eps: 0.1,
            alpha: 1.0,
            vocab_size: VOCAB_SIZE,
            max_seq_len: 66,
            rope_base: 10_000.0,
            rope_depth_scale: 10.0,
            thk_hidden: [64, 64],
            spectrum_dim: 142,
        }
    }

    /// 256-wide, 4-layer, 4-head preset.
    pub fn prism_13m() -> Self {
        Self {
            d_model: 256,
            n_heads: 4,
            n_layers: 4,
            d_ff: 1024,
            dropout: 0.1,
            thk_hidden: [256, 256],
            ..Self::desk()
        }
    }

    /// 768-wide, 6-layer, 8-head preset.
    pub fn prism_44m() -> Self {
        Self {
            d_model: 768,
            n_heads: 8,
            n_layers: 6,
            d_ff: 3072,
            dropout: 0.1,
            thk_hidden: [768, 768],
            ..Self::desk()
        }
    }

    /// Tiny width used by gradient checks.
    pub fn tiny() -> Self {
        Self {
            d_model: 16,
            n_heads: 2,
            n_layers: 2,
            d_ff: 32,
            thk_hidden: [16, 16],
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "prism-13m" | "13m" => Some(Self::prism_13m()),
            "prism-44m" | "44m" => Some(Self::prism_44m()),
            "tiny" => Some(Self::tiny()),
            _ => None,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.head_dim() % 2 != 0 {
            return bad(format!("head dim {} must be even for rotary pairs", self.head_dim()));
        }
        if !(0.0..1.0).contains(&self.label_smooth_eps) {
            return bad(format!("label_smooth_eps {} outside [0, 1)", self.label_smooth_eps));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.alpha >= 0.0) {
            return bad(format!("alpha {} must be >= 0", self.alpha));
        }
        if !(self.thk_min > 0.0) {
            return bad(format!("thk_min {} must be > 0", self.thk_min));
        }
        if self.vocab_size < 3 {
            return bad("vocab_size must cover materials, PAD and EOS".into());
        }
        if !(self.rope_base > 0.0 && self.rope_depth_scale > 0.0) {
            return bad("rope_base and rope_depth_scale must be positive".into());
        }
        if self.max_seq_len < 2 || self.spectrum_dim == 0 || self.d_ff == 0 || self.n_layers == 0 {
            return bad("degenerate sizes".into());
        }
        Ok(())
    }

    /// Number of learnable scalars, matching [`crate::ModelParams::new`].
    pub fn parameter_count(&self) -> usize {
        let d = self.d_model;
        let v = self.vocab_size;
        let [h1, h2] = self.thk_hidden;
        let block = 2 * 2 * d // two norms
            + 4 * d * d // q, k, v, o
            + d * self.d_ff + self.d_ff + self.d_ff * d + d;
        self.spectrum_dim * d + d // spectrum projection
            + v * d // material embeddings
            + self.n_layers * block
            + 2 * d // final norm
            + d * v // material head
            + d * h1 + h1 + h1 * h2 + h2 + h2 * v + v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in ["desk", "prism-13m", "prism-44m", "tiny"] {
            ModelConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(ModelConfig::preset("huge").is_none());
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = ModelConfig::desk();
        c.n_heads = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk();
        c.d_model = 6;
        c.n_heads = 2; // head dim 3 is odd
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk();
        c.label_smooth_eps = 1.0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk();
        c.thk_min = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn large_preset_parameter_count_near_label() {
        let n = ModelConfig::prism_44m().parameter_count() as f64;
        assert!((n / 44e6 - 1.0).abs() < 0.10, "{n}");
    }

    // The 256/1024/4-layer body holds ~3.3M weights under any standard layout;
    // the "13M" label cannot be reached from the published sizes.
    #[test]
    #[ignore = "published 13M label is inconsistent with its stated layer sizes"]
    fn small_preset_parameter_count_near_label() {
        let n = ModelConfig::prism_13m().parameter_count() as f64;
        assert!((n / 13e6 - 1.0).abs() < 0.10, "{n}");
    }
}
