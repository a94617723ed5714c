use prism_baselines::sa::{sa_inverse, SaConfig};
use prism_core::dataset::{generate_samples, SamplerConfig};
use prism_core::metrics::mae;
use prism_core::{MaterialDb, Simulator, WavelengthGrid};

fn sim() -> Simulator {
    Simulator::new(&MaterialDb::standard(), &WavelengthGrid::default()).unwrap()
}

fn targets(n: usize, seed: u64) -> Vec<prism_core::dataset::Sample> {
    let cfg = SamplerConfig {
        max_layers: 6,
        seed,
        ..SamplerConfig::default()
    };
    generate_samples(n, &cfg, &sim()).unwrap().0
}

fn small() -> SaConfig {
    SaConfig {
        restarts: 4,
        steps_per_restart: 300,
        seed: 5,
        ..SaConfig::default()
    }
}

#[test]
fn best_so_far_never_increases() {
    let sim = sim();
    for (i, t) in targets(5, 1).iter().enumerate() {
        let r = sa_inverse(&t.spectrum, &small(), &sim, i).unwrap();
        for run in &r.restarts {
            assert_eq!(run.best_so_far.len(), 300);
            assert!(run.best_so_far.windows(2).all(|w| w[1] <= w[0]));
            assert_eq!(*run.best_so_far.last().unwrap(), run.best_merit);
        }
        assert!(r.overall_trace().windows(2).all(|w| w[1] <= w[0]));
        let m = mae(sim.simulate(&r.design).unwrap().values(), t.spectrum.values());
        assert_eq!(m, r.merit);
    }
}

#[test]
fn zero_temperature_only_accepts_improvements() {
    let sim = sim();
    let cfg = SaConfig {
        t_start: 1e-200,
        t_end: 1e-250,
        ..small()
    };
    let t = &targets(1, 2)[0];
    let r = sa_inverse(&t.spectrum, &cfg, &sim, 0).unwrap();
    for run in &r.restarts {
        assert!(run.current.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn result_is_independent_of_thread_count() {
    let sim = sim();
    let t = &targets(1, 3)[0];
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sa_inverse(&t.spectrum, &small(), &sim, 7).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(4));
    let other = sa_inverse(&t.spectrum, &small(), &sim, 8).unwrap();
    assert_ne!(a.restarts[0].best_so_far, other.restarts[0].best_so_far);
}

#[test]
fn moves_respect_layer_and_thickness_bounds() {
    let sim = sim();
    let cfg = SaConfig {
        min_layers: 2,
        max_layers: 4,
        ..small()
    };
    let t = &targets(1, 4)[0];
    let r = sa_inverse(&t.spectrum, &cfg, &sim, 0).unwrap();
    for run in &r.restarts {
        assert!((2..=4).contains(&run.best.len()));
        assert!(run.best.thicknesses().iter().all(|d| (10.0..=500.0).contains(d)));
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let t = &targets(1, 5)[0];
    let sim = sim();
    for cfg in [
        SaConfig { t_start: 1e-4, t_end: 0.1, ..small() },
        SaConfig { restarts: 0, ..small() },
        SaConfig { move_weights: [0.0; 4], ..small() },
        SaConfig { min_layers: 5, max_layers: 3, ..small() },
    ] {
        assert!(sa_inverse(&t.spectrum, &cfg, &sim, 0).is_err());
    }
}

#[test]
fn temperature_schedule_is_geometric() {
    let cfg = SaConfig::default();
    assert_eq!(cfg.temperature(0), cfg.t_start);
    assert!((cfg.temperature(cfg.steps_per_restart - 1) - cfg.t_end).abs() < 1e-15);
    let mid = cfg.temperature((cfg.steps_per_restart - 1) / 2);
    assert!(mid < cfg.t_start && mid > cfg.t_end);
}

/// 10% budget (8 restarts x 500 steps) on 100 in-distribution targets.
#[test]
fn reduced_budget_reaches_mean_mae_below_005() {
    let sim = sim();
    let cfg = SaConfig {
        restarts: 8,
        steps_per_restart: 500,
        seed: 11,
        ..SaConfig::default()
    };
    let ts = targets(100, 12);
    let mut total = 0.0;
    for (i, t) in ts.iter().enumerate() {
        let r = sa_inverse(&t.spectrum, &cfg, &sim, i).unwrap();
        assert!(r.restarts.iter().all(|run| run.best_so_far.windows(2).all(|w| w[1] <= w[0])));
        total += r.merit;
    }
    let mean = total / ts.len() as f64;
    eprintln!("sa mean mae {mean}");
    assert!(mean < 0.05, "mean MAE {mean}");
}

#[test]
fn known_two_layer_target_in_nine_of_ten_runs() {
    let sim = sim();
    let cfg = SamplerConfig {
        min_layers: 2,
        max_layers: 2,
        seed: 30,
        ..SamplerConfig::default()
    };
    let t = &generate_samples(1, &cfg, &sim).unwrap().0[0];
    let hits = (0..10)
        .filter(|&seed| {
            let cfg = SaConfig { seed, ..SaConfig::default() };
            sa_inverse(&t.spectrum, &cfg, &sim, 0).unwrap().merit < 0.02
        })
        .count();
    assert!(hits >= 9, "{hits}/10 runs below 0.02");
}
