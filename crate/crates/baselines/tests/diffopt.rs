use prism_baselines::diffopt::{diffopt_inverse, refine, DiffOptConfig, InnerObjective};
use prism_baselines::merit;
use prism_core::dataset::{generate_samples, Sample, SamplerConfig};
use prism_core::{MaterialDb, Simulator, WavelengthGrid};

fn sim() -> Simulator {
    Simulator::new(&MaterialDb::standard(), &WavelengthGrid::default()).unwrap()
}

fn targets(n: usize, seed: u64) -> Vec<Sample> {
    let cfg = SamplerConfig {
        max_layers: 6,
        seed,
        ..SamplerConfig::default()
    };
    generate_samples(n, &cfg, &sim()).unwrap().0
}

fn small() -> DiffOptConfig {
    DiffOptConfig {
        restarts: 2,
        layer_counts: vec![2, 4],
        iterations: 40,
        seed: 3,
        ..DiffOptConfig::default()
    }
}

#[test]
fn refinement_never_worsens_the_start() {
    let sim = sim();
    for (i, t) in targets(6, 1).iter().enumerate() {
        let mats = t.design.materials();
        let init: Vec<f64> = (0..mats.len()).map(|k| 60.0 + 70.0 * ((i + k) % 5) as f64).collect();
        for objective in [InnerObjective::Mse, InnerObjective::Mae] {
            let cfg = DiffOptConfig { objective, ..small() };
            let r = refine(mats, &init, &t.spectrum, &cfg, &sim).unwrap();
            assert!(r.final_merit <= r.initial_merit);
            assert_eq!(merit(&r.design, &t.spectrum, &sim).unwrap(), r.final_merit);
            assert!(r.design.thicknesses().iter().all(|d| (10.0..=500.0).contains(d)));
        }
    }
}

#[test]
fn refining_the_true_thicknesses_stays_exact() {
    let sim = sim();
    let t = &targets(1, 2)[0];
    let r = refine(t.design.materials(), t.design.thicknesses(), &t.spectrum, &small(), &sim).unwrap();
    // ln/exp round trip of the thicknesses costs an ulp or two.
    assert!(r.initial_merit < 1e-12);
    assert!(r.final_merit <= r.initial_merit);
}

#[test]
fn restarts_cover_every_layer_count() {
    let sim = sim();
    let t = &targets(1, 3)[0];
    let r = diffopt_inverse(&t.spectrum, &small(), &sim, 0, None).unwrap();
    assert_eq!(r.restarts.len(), 4);
    let counts: Vec<usize> = r.restarts.iter().map(|x| x.layer_count).collect();
    assert_eq!(counts, [2, 2, 4, 4]);
    for x in &r.restarts {
        assert_eq!(x.design.len(), x.layer_count);
        assert!(x.final_merit <= x.initial_merit);
    }
    let best = r.restarts.iter().map(|x| x.final_merit).fold(f64::INFINITY, f64::min);
    assert_eq!(r.merit, best);
}

#[test]
fn result_is_independent_of_thread_count() {
    let sim = sim();
    let t = &targets(1, 4)[0];
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| diffopt_inverse(&t.spectrum, &small(), &sim, 9, None).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn invalid_configs_are_rejected() {
    let sim = sim();
    let t = &targets(1, 5)[0];
    for cfg in [
        DiffOptConfig { restarts: 0, ..small() },
        DiffOptConfig { layer_counts: vec![], ..small() },
        DiffOptConfig { layer_counts: vec![0], ..small() },
        DiffOptConfig { thickness_min: 600.0, ..small() },
        DiffOptConfig { penalty: -1.0, ..small() },
    ] {
        assert!(diffopt_inverse(&t.spectrum, &cfg, &sim, 0, None).is_err());
    }
}

/// Oracle-material mode: the true sequence is given and only thicknesses are
/// searched. The recovery rate is checked by the acceptance suite.
#[test]
fn oracle_material_restarts_keep_the_sequence_and_never_worsen() {
    let sim = sim();
    let cfg = DiffOptConfig {
        restarts: 4,
        iterations: 100,
        ..DiffOptConfig::default()
    };
    for (i, t) in targets(6, 21).iter().enumerate() {
        let r = diffopt_inverse(&t.spectrum, &cfg, &sim, i, Some(t.design.materials())).unwrap();
        assert_eq!(r.restarts.len(), cfg.restarts * cfg.layer_counts.len());
        assert!(r.restarts.iter().all(|x| x.design.materials() == t.design.materials()));
        assert!(r.restarts.iter().all(|x| x.final_merit <= x.initial_merit));
        assert_eq!(r.merit, r.restarts.iter().map(|x| x.final_merit).fold(f64::INFINITY, f64::min));
    }
}
