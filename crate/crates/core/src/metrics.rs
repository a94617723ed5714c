//! Spectral error metrics and benchmark aggregation. Structures are never
//! compared directly: every prediction is re-simulated and judged on its
//! spectrum.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::materials::WavelengthGrid;
use crate::tmm::{Design, Simulator, Spectrum};
use crate::{Error, Result};

const SS_FLOOR: f64 = 1e-12;

/// Mean absolute error over all entries.
pub fn mae(predicted: &[f64], target: &[f64]) -> f64 {
    debug_assert_eq!(predicted.len(), target.len());
    predicted.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / target.len() as f64
}

/// Coefficient of determination `1 − SS_res/SS_tot` about the target mean.
///
/// When the target is flat (`SS_tot < 1e-12`) the value is 1 for a matching
/// prediction and `-inf` otherwise; aggregates treat `-inf` as undefined.
pub fn r2(predicted: &[f64], target: &[f64]) -> f64 {
    debug_assert_eq!(predicted.len(), target.len());
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let ss_tot: f64 = target.iter().map(|t| (t - mean).powi(2)).sum();
    let ss_res: f64 = predicted.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum();
    if ss_tot < SS_FLOOR {
        return if ss_res < SS_FLOOR { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - ss_res / ss_tot
}

/// 1-D earth mover's distance between two non-negative profiles on `grid`,
/// each normalised to unit mass. Zero-mass profiles: 0 if both are empty,
/// the full grid span if only one is.
pub fn emd_component(predicted: &[f64], target: &[f64], grid: &WavelengthGrid) -> f64 {
    let span = grid.last() - grid.first();
    let mp: f64 = predicted.iter().sum();
    let mt: f64 = target.iter().sum();
    match (mp > 0.0, mt > 0.0) {
        (false, false) => return 0.0,
        (true, false) | (false, true) => return span,
        _ => {}
    }
    let pts = grid.points();
    let (mut cp, mut ct, mut cost) = (0.0, 0.0, 0.0);
    for w in 0..pts.len() - 1 {
        cp += predicted[w] / mp;
        ct += target[w] / mt;
        cost += (cp - ct).abs() * (pts[w + 1] - pts[w]);
    }
    cost
}

/// Spectral EMD in nm: reflectance and transmittance blocks transported
/// separately and summed.
pub fn emd(predicted: &Spectrum, target: &Spectrum, grid: &WavelengthGrid) -> f64 {
    emd_component(predicted.reflectance(), target.reflectance(), grid)
        + emd_component(predicted.transmittance(), target.transmittance(), grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub index: usize,
    pub mae: f64,
    pub r2: f64,
    pub emd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalAggregate {
    pub mae: f64,
    /// Mean over samples with a defined R².
    pub r2: f64,
    pub emd: f64,
    pub r2_undefined: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub records: Vec<EvalRecord>,
    /// `(target index, message)` for targets that failed to decode or simulate.
    pub failures: Vec<(usize, String)>,
}

impl EvalReport {
    pub fn count(&self) -> usize {
        self.records.len()
    }

    pub fn aggregate(&self) -> Option<EvalAggregate> {
        if self.records.is_empty() {
            return None;
        }
        let n = self.records.len() as f64;
        let defined: Vec<f64> = self.records.iter().map(|r| r.r2).filter(|v| v.is_finite()).collect();
        Some(EvalAggregate {
            mae: self.records.iter().map(|r| r.mae).sum::<f64>() / n,
            r2: if defined.is_empty() {
                f64::NAN
            } else {
                defined.iter().sum::<f64>() / defined.len() as f64
            },
            emd: self.records.iter().map(|r| r.emd).sum::<f64>() / n,
            r2_undefined: self.records.len() - defined.len(),
        })
    }

    /// Per-sample CSV rows followed by a `# summary` line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,mae,r2,emd\n");
        for r in &self.records {
            let r2 = if r.r2.is_finite() { r.r2.to_string() } else { "undefined".into() };
            let _ = writeln!(out, "{},{},{},{}", r.index, r.mae, r2, r.emd);
        }
        for (i, msg) in &self.failures {
            let _ = writeln!(out, "# failed {i}: {}", msg.replace('\n', " "));
        }
        let _ = write!(out, "# summary label={} count={} failures={}", self.label, self.count(), self.failures.len());
        if let Some(a) = self.aggregate() {
            let _ = write!(
                out,
                " mae={} r2={} emd={} r2_undefined={}",
                a.mae, a.r2, a.emd, a.r2_undefined
            );
        }
        out.push('\n');
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Metrics of one predicted design against its target.
pub fn score(design: &Design, target: &Spectrum, sim: &Simulator) -> Result<(Spectrum, EvalRecord)> {
    let resim = sim.simulate(design)?;
    if resim.len() != target.len() {
        return Err(Error::Other(format!(
            "layout mismatch: {} vs {} spectrum values",
            resim.len(),
            target.len()
        )));
    }
    let record = EvalRecord {
        index: 0,
        mae: mae(resim.values(), target.values()),
        r2: r2(resim.values(), target.values()),
        emd: emd(&resim, target, sim.grid()),
    };
    Ok((resim, record))
}

/// Runs `decode` on every target, re-simulates each predicted design and
/// scores it against the target. Failures are recorded and excluded.
pub fn evaluate<F>(label: &str, targets: &[Spectrum], decode: F, sim: &Simulator) -> EvalReport
where
    F: Fn(usize, &Spectrum) -> Result<Design> + Sync,
{
    let results: Vec<Result<EvalRecord>> = targets
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let design = decode(i, t)?;
            let (_, mut rec) = score(&design, t, sim)?;
            rec.index = i;
            Ok(rec)
        })
        .collect();
    let mut report = EvalReport {
        label: label.to_string(),
        records: Vec::new(),
        failures: Vec::new(),
    };
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => report.records.push(rec),
            Err(e) => report.failures.push((i, e.to_string())),
        }
    }
    report
}

/// Idealised filter shapes for smoke tests outside the training distribution.
/// These are simple analytic step profiles, not a curated benchmark.
pub fn standin_targets(grid: &WavelengthGrid) -> Vec<(String, Spectrum)> {
    let make = |name: &str, t: &dyn Fn(f64) -> f64| {
        let tr: Vec<f64> = grid.points().iter().map(|&w| t(w)).collect();
        let r: Vec<f64> = tr.iter().map(|v| 1.0 - v).collect();
        (name.to_string(), Spectrum::from_parts(&r, &tr).unwrap())
    };
    vec![
        make("longpass_700", &|w| if w >= 700.0 { 0.95 } else { 0.02 }),
        make("shortpass_650", &|w| if w <= 650.0 { 0.95 } else { 0.02 }),
        make("notch_550", &|w| if (520.0..=580.0).contains(&w) { 0.02 } else { 0.95 }),
        make("bandpass_800", &|w| if (760.0..=840.0).contains(&w) { 0.95 } else { 0.02 }),
        make("antireflection", &|_| 0.99),
    ]
}
