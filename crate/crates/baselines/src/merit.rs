use prism_core::metrics::mae;
use prism_core::{Design, Result, Simulator, Spectrum};

/// Spectral MAE between a design's simulated spectrum and the target.
pub fn merit(design: &Design, target: &Spectrum, sim: &Simulator) -> Result<f64> {
    Ok(mae(sim.simulate(design)?.values(), target.values()))
}
