use prism_core::materials::{EOS, NUM_MATERIALS, PAD};
use prism_core::{Design, Spectrum};

use crate::{ModelError, Result};

/// Padded batch of token sequences with their conditioning spectra.
///
/// Row `b` holds `seq` material tokens (real layers, then EOS if the sequence
/// is complete, then PAD) with matching thicknesses (0 at EOS/PAD).
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch {
    pub batch: usize,
    pub seq: usize,
    pub materials: Vec<usize>,
    pub thicknesses: Vec<f64>,
    pub spectra: Vec<f64>,
    pub spectrum_dim: usize,
}

impl TokenBatch {
    /// Teacher-forcing batch: every design is followed by EOS.
    pub fn from_samples<'a, I>(samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a Design, &'a Spectrum)>,
    {
        Self::build(samples, true)
    }

    /// Decoding batch: designs are open prefixes, no EOS appended.
    pub fn prefixes<'a, I>(samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a Design, &'a Spectrum)>,
    {
        Self::build(samples, false)
    }

    fn build<'a, I>(samples: I, eos: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a Design, &'a Spectrum)>,
    {
        let samples: Vec<_> = samples.into_iter().collect();
        let spectrum_dim = samples.first().map_or(0, |s| s.1.len());
        let seq = samples.iter().map(|s| s.0.len()).max().unwrap_or(0) + usize::from(eos);
        let mut out = Self {
            batch: samples.len(),
            seq,
            materials: vec![PAD; samples.len() * seq],
            thicknesses: vec![0.0; samples.len() * seq],
            spectra: Vec::with_capacity(samples.len() * spectrum_dim),
            spectrum_dim,
        };
        for (b, (design, spectrum)) in samples.iter().enumerate() {
            if spectrum.len() != spectrum_dim {
                return Err(ModelError::Shape(format!(
                    "spectrum {b} has {} values, expected {spectrum_dim}",
                    spectrum.len()
                )));
            }
            for (t, (m, d)) in design.layers().enumerate() {
                out.materials[b * seq + t] = m;
                out.thicknesses[b * seq + t] = d;
            }
            if eos {
                out.materials[b * seq + design.len()] = EOS;
            }
            out.spectra.extend_from_slice(spectrum.values());
        }
        Ok(out)
    }

    pub fn material(&self, b: usize, t: usize) -> usize {
        self.materials[b * self.seq + t]
    }

    pub fn thickness(&self, b: usize, t: usize) -> f64 {
        self.thicknesses[b * self.seq + t]
    }

    /// True where the token is not PAD.
    pub fn mask(&self, b: usize, t: usize) -> bool {
        self.material(b, t) != PAD
    }

    /// True on real layer tokens.
    pub fn is_layer(&self, b: usize, t: usize) -> bool {
        self.material(b, t) < NUM_MATERIALS
    }

    pub fn spectrum(&self, b: usize) -> &[f64] {
        &self.spectra[b * self.spectrum_dim..(b + 1) * self.spectrum_dim]
    }

    /// Number of non-PAD tokens.
    pub fn non_pad(&self) -> usize {
        self.materials.iter().filter(|&&m| m != PAD).count()
    }

    pub fn validate(&self, vocab_size: usize, spectrum_dim: usize) -> Result<()> {
        if self.materials.len() != self.batch * self.seq
            || self.thicknesses.len() != self.batch * self.seq
            || self.spectra.len() != self.batch * self.spectrum_dim
        {
            return Err(ModelError::Shape("batch buffers disagree with batch × seq".into()));
        }
        if self.batch > 0 && self.spectrum_dim != spectrum_dim {
            return Err(ModelError::Shape(format!(
                "spectrum dim {} but model expects {spectrum_dim}",
                self.spectrum_dim
            )));
        }
        for (i, (&m, &d)) in self.materials.iter().zip(&self.thicknesses).enumerate() {
            if m >= vocab_size {
                return Err(ModelError::Shape(format!("token {m} outside vocabulary")));
            }
            let layer = m < NUM_MATERIALS;
            if layer != (d > 0.0) || !d.is_finite() {
                return Err(ModelError::Shape(format!(
                    "position {i}: thickness {d} inconsistent with token {m}"
                )));
            }
        }
        Ok(())
    }

    /// Cumulative depth positions for row `b`, SPEC first.
    pub fn positions(&self, b: usize) -> Vec<f64> {
        cumulative_positions(&self.thicknesses[b * self.seq..(b + 1) * self.seq])
    }
}

/// `[0, d_1, d_1 + d_2, ...]`: position 0 is the spectrum token, position ℓ the
/// depth at the bottom of layer ℓ. EOS/PAD (thickness 0) repeat the final depth.
pub fn cumulative_positions(thicknesses: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(thicknesses.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for d in thicknesses {
        acc += d;
        out.push(acc);
    }
    out
}
