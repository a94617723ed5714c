//! Holds the `acceptance` test target (`tests/acceptance.rs`), which checks
//! the physics, model, baseline, metric and reproducibility criteria end to
//! end and prints one PASS/FAIL line per criterion.
