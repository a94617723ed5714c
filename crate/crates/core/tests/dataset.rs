use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use prism_core::dataset::{generate_dataset, read_all, read_dataset, sample_design, DatasetWriter, Sample, SamplerConfig};
use prism_core::materials::{MaterialDb, WavelengthGrid, NUM_MATERIALS};
use prism_core::rng::stream_rng;
use prism_core::tmm::Simulator;
use prism_core::Error;

fn sim() -> (MaterialDb, Simulator) {
    let db = MaterialDb::standard();
    let sim = Simulator::new(&db, &WavelengthGrid::default()).unwrap();
    (db, sim)
}

fn chi_square(observed: &[u64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum()
}

#[test]
fn layer_count_and_material_histograms() {
    let cfg = SamplerConfig::default();
    let mut rng = stream_rng(2024, 0);
    let n = 1_000_000u64;
    let mut layers = [0u64; 20];
    let mut mats = [0u64; NUM_MATERIALS];
    let mut total_layers = 0u64;
    for _ in 0..n {
        let d = sample_design(&mut rng, &cfg);
        layers[d.len() - 1] += 1;
        for &m in d.materials() {
            mats[m] += 1;
        }
        total_layers += d.len() as u64;
    }
    // P(L) = L / 210
    let expected: Vec<f64> = (1..=20).map(|l| n as f64 * l as f64 / 210.0).collect();
    // chi-square critical values at p = 0.001 (19 and 16 degrees of freedom)
    assert!(chi_square(&layers, &expected) < 43.820, "{layers:?}");
    let expected_m = vec![total_layers as f64 / NUM_MATERIALS as f64; NUM_MATERIALS];
    assert!(chi_square(&mats, &expected_m) < 39.252, "{mats:?}");

    // P(20)/P(1) ~ 20, within 3 sigma (delta method on the count ratio)
    let (c1, c20) = (layers[0] as f64, layers[19] as f64);
    let ratio = c20 / c1;
    let sigma = ratio * (1.0 / c1 + 1.0 / c20).sqrt();
    assert!((ratio - 20.0).abs() < 3.0 * sigma, "ratio {ratio} sigma {sigma}");
}

#[test]
fn empty_dataset_is_valid() {
    let (db, sim) = sim();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.ds");
    let summary = generate_dataset(0, &SamplerConfig::default(), &sim, &db.manifest_hash(), &path).unwrap();
    assert_eq!(summary.count, 0);
    let (header, samples) = read_all(&path).unwrap();
    assert!(samples.is_empty());
    assert_eq!(header.grid, WavelengthGrid::default());
    assert_eq!(header.manifest_hash, db.manifest_hash());
}

fn sorted_content_hash(samples: &[Sample]) -> u64 {
    let mut lines: Vec<String> = samples
        .iter()
        .map(|s| format!("{:?}|{:?}|{:?}", s.design.materials(), s.design.thicknesses(), s.spectrum.values()))
        .collect();
    lines.sort();
    let mut h = DefaultHasher::new();
    lines.hash(&mut h);
    h.finish()
}

#[test]
fn generation_is_deterministic_and_self_consistent() {
    let (db, sim) = sim();
    let dir = tempfile::tempdir().unwrap();
    let cfg = SamplerConfig {
        seed: 77,
        ..Default::default()
    };
    let a = dir.path().join("a.ds");
    let b = dir.path().join("b.ds");
    generate_dataset(1000, &cfg, &sim, &db.manifest_hash(), &a).unwrap();
    generate_dataset(1000, &cfg, &sim, &db.manifest_hash(), &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let (_, sa) = read_all(&a).unwrap();
    let (_, sb) = read_all(&b).unwrap();
    assert_eq!(sorted_content_hash(&sa), sorted_content_hash(&sb));
    assert_eq!(sa.len(), 1000);
    for s in &sa {
        let resim = sim.simulate(&s.design).unwrap();
        for (x, y) in resim.values().iter().zip(s.spectrum.values()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }
    let other = dir.path().join("c.ds");
    generate_dataset(1000, &SamplerConfig { seed: 78, ..cfg }, &sim, &db.manifest_hash(), &other).unwrap();
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&other).unwrap());
}

#[test]
fn write_then_read_round_trip() {
    let (db, sim) = sim();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rt.ds");
    let (samples, _) = prism_core::dataset::generate_samples(100, &SamplerConfig::default(), &sim).unwrap();
    let mut w = DatasetWriter::create(&path, sim.grid(), &db.manifest_hash()).unwrap();
    for s in &samples {
        w.write(s).unwrap();
    }
    w.finish().unwrap();
    let (_, back) = read_all(&path).unwrap();
    assert_eq!(back, samples);
}

#[test]
fn truncated_file_fails_at_the_cut_record() {
    let (db, sim) = sim();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.ds");
    generate_dataset(10, &SamplerConfig::default(), &sim, &db.manifest_hash(), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    // cut the 8th record (index 7) in half
    let lines: Vec<&str> = text.lines().collect();
    let mut cut = lines[..8].join("\n");
    cut.push('\n');
    cut.push_str(&lines[8][..lines[8].len() / 2]);
    std::fs::write(&path, cut).unwrap();
    let results: Vec<_> = read_dataset(&path).unwrap().collect();
    assert_eq!(results.len(), 8);
    assert!(results[..7].iter().all(|r| r.is_ok()));
    assert!(matches!(results[7], Err(Error::MalformedRecord { index: 7, .. })));
}

#[test]
fn short_spectrum_record_is_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ds");
    let spec: Vec<String> = (0..141).map(|_| "0.5".into()).collect();
    std::fs::write(
        &path,
        format!("# prism-dataset v1 grid=400:1100:71 materials=x\n1 2;10 20;{}\n", spec.join(" ")),
    )
    .unwrap();
    let err = read_all(&path).unwrap_err();
    assert!(matches!(err, Error::MalformedRecord { index: 0, .. }));
    assert!(err.to_string().contains("malformed record"));
}

#[test]
fn version_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.ds");
    std::fs::write(&path, "# prism-dataset v0 grid=400:1100:71 materials=x\n").unwrap();
    assert!(matches!(read_dataset(&path), Err(Error::VersionMismatch { .. })));
}
