mod common;

use rand::Rng;

use common::{batch_of, jittered_params, random_samples};
use prism_core::materials::PAD;
use prism_core::rng::stream_rng;
use prism_model::backward::{loss, loss_and_gradients};
use prism_model::{ForwardOptions, ModelConfig};

#[test]
fn gradients_match_central_differences() {
    let config = ModelConfig::tiny();
    let params = jittered_params(&config, 11, 0.2);
    // Mixed lengths so the batch has EOS and PAD targets.
    let samples = random_samples(4, 5, 1, 6);
    let batch = batch_of(&samples);
    let opts = ForwardOptions::eval();
    let (_, grads) = loss_and_gradients(&params, &config, &batch, &opts).unwrap();
    let n = params.count();
    let mut rng = stream_rng(3, 0);
    let h = 1e-4;
    let mut worst = (0.0, String::new());
    let mut checked = 0;
    let mut informative = 0;
    while checked < 300 {
        let i = rng.gen_range(0..n);
        let name = params.name_of(i);
        // The PAD embedding row never reaches the loss.
        if name == "mat_emb" && (i - params.offset_of("mat_emb").unwrap()) / config.d_model == PAD {
            continue;
        }
        let mut p = params.clone();
        let x = p.scalar(i);
        p.set_scalar(i, x + h);
        let up = loss(&p, &config, &batch, &opts).unwrap().total;
        p.set_scalar(i, x - h);
        let down = loss(&p, &config, &batch, &opts).unwrap().total;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.scalar(i);
        let scale = analytic.abs().max(numeric.abs());
        let err = if scale < 1e-8 { 0.0 } else { (analytic - numeric).abs() / scale };
        informative += usize::from(scale >= 1e-8);
        if err > worst.0 {
            worst = (err, format!("{name}[{i}]: analytic {analytic:e} numeric {numeric:e}"));
        }
        checked += 1;
    }
    assert!(informative >= 200, "only {informative} coordinates had a measurable gradient");
    assert!(worst.0 < 1e-4, "worst relative error {} at {}", worst.0, worst.1);
}

#[test]
fn alpha_zero_disconnects_thickness_head() {
    let config = ModelConfig {
        alpha: 0.0,
        ..ModelConfig::tiny()
    };
    let params = jittered_params(&config, 2, 0.2);
    let batch = batch_of(&random_samples(3, 8, 1, 5));
    let (_, g) = loss_and_gradients(&params, &config, &batch, &ForwardOptions::eval()).unwrap();
    for t in [&g.thk_w1, &g.thk_b1, &g.thk_w2, &g.thk_b2, &g.thk_w3, &g.thk_b3] {
        assert!(t.data.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn unused_pad_embedding_gets_no_gradient() {
    let config = ModelConfig::tiny();
    let params = jittered_params(&config, 4, 0.2);
    // Equal lengths: no PAD anywhere.
    let batch = batch_of(&random_samples(3, 9, 4, 4));
    assert!(!batch.materials.contains(&PAD));
    let (_, g) = loss_and_gradients(&params, &config, &batch, &ForwardOptions::eval()).unwrap();
    assert!(g.mat_emb.row(PAD).iter().all(|&v| v == 0.0));
}

#[test]
fn gradients_are_deterministic_without_dropout() {
    let config = ModelConfig::tiny();
    let params = jittered_params(&config, 6, 0.2);
    let batch = batch_of(&random_samples(5, 1, 1, 8));
    let a = loss_and_gradients(&params, &config, &batch, &ForwardOptions::eval()).unwrap();
    let b = loss_and_gradients(&params, &config, &batch, &ForwardOptions::eval()).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1.flatten(), b.1.flatten());
}

#[test]
fn dropout_gradients_match_differences_with_fixed_masks() {
    let config = ModelConfig {
        dropout: 0.3,
        ..ModelConfig::tiny()
    };
    let params = jittered_params(&config, 12, 0.2);
    let batch = batch_of(&random_samples(3, 2, 1, 5));
    let opts = ForwardOptions::train(5, 17);
    let (_, grads) = loss_and_gradients(&params, &config, &batch, &opts).unwrap();
    let mut rng = stream_rng(8, 0);
    let h = 1e-4;
    for _ in 0..60 {
        let i = rng.gen_range(0..params.count());
        let mut p = params.clone();
        let x = p.scalar(i);
        p.set_scalar(i, x + h);
        let up = loss(&p, &config, &batch, &opts).unwrap().total;
        p.set_scalar(i, x - h);
        let down = loss(&p, &config, &batch, &opts).unwrap().total;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.scalar(i);
        let scale = analytic.abs().max(numeric.abs());
        if scale > 1e-8 {
            assert!((analytic - numeric).abs() / scale < 1e-4, "{}: {analytic} vs {numeric}", params.name_of(i));
        }
    }
}
