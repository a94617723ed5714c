use proptest::prelude::*;

use prism_baselines::merit;
use prism_core::materials::NUM_MATERIALS;
use prism_core::{Design, MaterialDb, Simulator, Spectrum, WavelengthGrid};

fn sim() -> Simulator {
    Simulator::new(&MaterialDb::standard(), &WavelengthGrid::default()).unwrap()
}

#[test]
fn constant_offset_gives_the_offset() {
    let sim = sim();
    let d = Design::new(vec![3, 9], vec![120.0, 80.0]).unwrap();
    let s = sim.simulate(&d).unwrap();
    let shifted: Vec<f64> = s.values().iter().map(|v| v + 0.1).collect();
    let target = Spectrum::new(shifted).unwrap();
    assert!((merit(&d, &target, &sim).unwrap() - 0.1).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn own_spectrum_has_zero_merit(
        layers in prop::collection::vec((0..NUM_MATERIALS, 10.0f64..500.0), 1..=20)
    ) {
        let sim = sim();
        let (m, t): (Vec<_>, Vec<_>) = layers.into_iter().unzip();
        let d = Design::new(m, t).unwrap();
        let s = sim.simulate(&d).unwrap();
        prop_assert_eq!(merit(&d, &s, &sim).unwrap(), 0.0);
    }
}
