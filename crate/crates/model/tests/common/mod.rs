#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, Normal};

use prism_core::dataset::Sample;
use prism_core::materials::NUM_MATERIALS;
use prism_core::rng::stream_rng;
use prism_core::{Design, Spectrum};
use prism_model::{ModelConfig, ModelParams, TokenBatch};

/// Default init with every scalar jittered so no gradient path is dead.
pub fn jittered_params(config: &ModelConfig, seed: u64, std: f64) -> ModelParams {
    let mut p = ModelParams::new(config, seed).unwrap();
    let mut rng = stream_rng(seed, 99);
    let n = Normal::new(0.0, std).unwrap();
    p.visit_mut(|_, t| t.data.iter_mut().for_each(|v| *v += n.sample(&mut rng)));
    p
}

pub fn random_design(rng: &mut impl Rng, min_layers: usize, max_layers: usize) -> Design {
    let l = rng.gen_range(min_layers..=max_layers);
    Design::new(
        (0..l).map(|_| rng.gen_range(0..NUM_MATERIALS)).collect(),
        (0..l).map(|_| rng.gen_range(10.0..500.0)).collect(),
    )
    .unwrap()
}

pub fn random_spectrum(rng: &mut impl Rng, dim: usize) -> Spectrum {
    Spectrum::new((0..dim).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

pub fn random_samples(n: usize, seed: u64, min_layers: usize, max_layers: usize) -> Vec<Sample> {
    let mut rng = stream_rng(seed, 7);
    (0..n)
        .map(|_| Sample {
            design: random_design(&mut rng, min_layers, max_layers),
            spectrum: random_spectrum(&mut rng, 142),
        })
        .collect()
}

pub fn batch_of(samples: &[Sample]) -> TokenBatch {
    TokenBatch::from_samples(samples.iter().map(|s| (&s.design, &s.spectrum))).unwrap()
}
