//! Target and design files.
//!
//! Targets are either a dataset file (its generating designs are kept for
//! oracle runs) or a spectrum CSV: one target per row, `2 × grid` values
//! (reflectance block then transmittance block), `#` comment lines and an
//! optional header row.
//!
//! Designs files have the columns
//! `index,layers,materials,thicknesses_nm,merit,error` with `;`-separated
//! material names and thicknesses. Failed targets keep their row with an
//! empty design and the error text.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context as _};

use prism_core::dataset::{read_all, MAGIC};
use prism_core::{Design, MaterialDb, Simulator, Spectrum, WavelengthGrid};

use crate::args::GlobalArgs;
use crate::manifest::write_atomic;
use crate::usage;

pub fn require_file(path: &Path) -> anyhow::Result<()> {
    if !path.is_file() && !path.is_dir() {
        return Err(usage(format!("missing input: {}", path.display())));
    }
    Ok(())
}

pub fn load_db(global: &GlobalArgs) -> anyhow::Result<MaterialDb> {
    match &global.materials {
        Some(dir) => {
            require_file(dir)?;
            MaterialDb::load(dir).with_context(|| format!("loading materials from {}", dir.display()))
        }
        None => Ok(MaterialDb::standard()),
    }
}

pub fn simulator(db: &MaterialDb) -> anyhow::Result<Simulator> {
    Ok(Simulator::new(db, &WavelengthGrid::default())?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub spectrum: Spectrum,
    /// Generating design, when the targets came from a dataset.
    pub design: Option<Design>,
}

pub fn read_targets(path: &Path, db: &MaterialDb, grid: &WavelengthGrid) -> anyhow::Result<Vec<Target>> {
    require_file(path)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.starts_with(MAGIC) {
        let (header, samples) = read_all(path)?;
        if header.manifest_hash != db.manifest_hash() {
            bail!(
                "{}: dataset was generated with materials {}, current database is {}",
                path.display(),
                header.manifest_hash,
                db.manifest_hash()
            );
        }
        if header.grid != *grid {
            bail!("{}: dataset grid {} differs from {}", path.display(), header.grid.descriptor(), grid.descriptor());
        }
        return Ok(samples
            .into_iter()
            .map(|s| Target {
                spectrum: s.spectrum,
                design: Some(s.design),
            })
            .collect());
    }
    parse_spectrum_csv(&text, 2 * grid.len()).with_context(|| format!("reading targets {}", path.display()))
}

fn parse_spectrum_csv(text: &str, width: usize) -> anyhow::Result<Vec<Target>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if out.is_empty() && fields[0].parse::<f64>().is_err() {
            continue; // header
        }
        if fields.len() != width {
            bail!("row {row}: expected {width} values, found {}", fields.len());
        }
        let values = fields
            .iter()
            .enumerate()
            .map(|(c, f)| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .with_context(|| format!("row {row}, column {}: not a number: {f:?}", c + 1))
            })
            .collect::<anyhow::Result<Vec<f64>>>()?;
        let spectrum = Spectrum::new(values).with_context(|| format!("row {row}"))?;
        out.push(Target { spectrum, design: None });
    }
    Ok(out)
}

pub fn write_spectrum_csv(path: &Path, spectra: &[Spectrum]) -> anyhow::Result<()> {
    let mut text = String::new();
    for s in spectra {
        let row: Vec<String> = s.values().iter().map(f64::to_string).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub index: usize,
    pub design: Option<Design>,
    pub merit: Option<f64>,
    pub error: Option<String>,
}

const DESIGN_HEADER: [&str; 6] = ["index", "layers", "materials", "thicknesses_nm", "merit", "error"];

pub fn write_designs(path: &Path, rows: &[DesignRow], db: &MaterialDb) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DESIGN_HEADER)?;
    for r in rows {
        let (layers, mats, thk) = match &r.design {
            Some(d) => (
                d.len().to_string(),
                d.materials().iter().map(|&m| db.token_name(m)).collect::<Vec<_>>().join(";"),
                d.thicknesses().iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        w.write_record([
            r.index.to_string(),
            layers,
            mats,
            thk,
            r.merit.map(|m| m.to_string()).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    write_atomic(path, &bytes)
}

pub fn read_designs(path: &Path, db: &MaterialDb) -> anyhow::Result<Vec<DesignRow>> {
    require_file(path)?;
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 2;
        let rec = rec.with_context(|| format!("{} row {row}", path.display()))?;
        let field = |k: usize| rec.get(k).unwrap_or("").trim();
        let ctx = || format!("{} row {row}", path.display());
        let index: usize = field(0).parse().with_context(ctx)?;
        let error = Some(field(5).to_string()).filter(|e| !e.is_empty());
        let merit = match field(4) {
            "" => None,
            m => Some(m.parse::<f64>().with_context(ctx)?),
        };
        let design = if field(2).is_empty() && field(3).is_empty() {
            if error.is_none() && field(1) != "0" {
                bail!("{}: row {row} has neither a design nor an error", path.display());
            }
            if error.is_none() {
                Some(Design::empty())
            } else {
                None
            }
        } else {
            let materials = field(2)
                .split(';')
                .map(|n| db.id_of(n).with_context(|| format!("{}: unknown material {n:?}", ctx())))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let thicknesses = field(3)
                .split(';')
                .map(|t| t.parse::<f64>().with_context(ctx))
                .collect::<anyhow::Result<Vec<_>>>()?;
            Some(Design::new(materials, thicknesses).with_context(ctx)?)
        };
        out.push(DesignRow {
            index,
            design,
            merit,
            error,
        });
    }
    Ok(out)
}
