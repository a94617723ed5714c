//! Dispersion data, the material vocabulary and interpolation onto the
//! simulation wavelength grid.
//!
//! A material database lives in a directory holding one `<name>.csv` file per
//! material (`wavelength_nm,n,k`, ascending rows) and a `materials.toml`
//! manifest:
//!
//! ```toml
//! materials = ["Al", "Al2O3", "AlN", ...]   # exactly 17 names
//! substrate = "glass"                         # optional, reads glass.csv
//! ```
//!
//! Token ids follow the lexicographic order of the material names, so the
//! same set of files always yields the same vocabulary.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::spline::NaturalSpline;
use crate::{Error, Result};

/// Number of design materials.
pub const NUM_MATERIALS: usize = 17;
/// Padding token id.
pub const PAD: usize = NUM_MATERIALS;
/// End-of-stack token id.
pub const EOS: usize = NUM_MATERIALS + 1;
/// Materials plus PAD and EOS.
pub const VOCAB_SIZE: usize = NUM_MATERIALS + 2;

/// Default crown-glass substrate index.
pub const DEFAULT_SUBSTRATE_INDEX: f64 = 1.52;

pub const MANIFEST_FILE: &str = "materials.toml";

/// Strictly increasing list of wavelengths in nm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavelengthGrid {
    points: Vec<f64>,
}

impl WavelengthGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::BadGrid("need at least two wavelengths".into()));
        }
        if points.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::BadGrid("wavelengths must be finite and positive".into()));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::BadGrid("wavelengths must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    /// `count` evenly spaced points from `start` to `end` inclusive.
    pub fn uniform(start: f64, end: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::BadGrid("need at least two wavelengths".into()));
        }
        let step = (end - start) / (count - 1) as f64;
        Self::new((0..count).map(|i| start + step * i as f64).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.points[0]
    }

    pub fn last(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// `start:end:count` descriptor used in file headers.
    pub fn descriptor(&self) -> String {
        format!("{}:{}:{}", self.first(), self.last(), self.len())
    }

    pub fn from_descriptor(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::BadGrid(format!("bad grid descriptor {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let start: f64 = parts[0].parse().map_err(|_| bad())?;
        let end: f64 = parts[1].parse().map_err(|_| bad())?;
        let count: usize = parts[2].parse().map_err(|_| bad())?;
        Self::uniform(start, end, count)
    }
}

impl Default for WavelengthGrid {
    /// 71 points, 400 to 1100 nm in 10 nm steps.
    fn default() -> Self {
        Self {
            points: (0..71).map(|i| 400.0 + 10.0 * i as f64).collect(),
        }
    }
}

/// Tabulated complex refractive index of one material.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionTable {
    pub material_name: String,
    /// `(wavelength nm, n, k)`, ascending in wavelength.
    pub samples: Vec<(f64, f64, f64)>,
}

impl DispersionTable {
    pub fn new(material_name: impl Into<String>, samples: Vec<(f64, f64, f64)>) -> Result<Self> {
        let table = Self {
            material_name: material_name.into(),
            samples,
        };
        table.validate()?;
        Ok(table)
    }

    /// Table with the same index at every sample over `[lo, hi]`.
    pub fn constant(name: impl Into<String>, n: f64, k: f64, lo: f64, hi: f64) -> Result<Self> {
        let step = (hi - lo) / 3.0;
        Self::new(name, (0..4).map(|i| (lo + step * i as f64, n, k)).collect())
    }

    fn validate(&self) -> Result<()> {
        let name = &self.material_name;
        if self.samples.len() < 4 {
            return Err(Error::BadTable {
                table: name.clone(),
                reason: format!("{} samples, need at least 4", self.samples.len()),
            });
        }
        for (i, &(w, n, k)) in self.samples.iter().enumerate() {
            if !(w.is_finite() && n.is_finite() && k.is_finite()) || w <= 0.0 || n < 0.0 || k < 0.0 {
                return Err(Error::BadTable {
                    table: name.clone(),
                    reason: format!("sample {i} out of range ({w}, {n}, {k})"),
                });
            }
            if i > 0 && !(w > self.samples[i - 1].0) {
                return Err(Error::NonMonotone {
                    table: name.clone(),
                    index: i,
                });
            }
        }
        Ok(())
    }

    pub fn range(&self) -> (f64, f64) {
        (self.samples[0].0, self.samples[self.samples.len() - 1].0)
    }

    fn check_covers(&self, lo: f64, hi: f64) -> Result<()> {
        let (a, b) = self.range();
        if a > lo || b < hi {
            return Err(Error::CoverageGap {
                table: self.material_name.clone(),
                lo: a,
                hi: b,
                need_lo: lo,
                need_hi: hi,
            });
        }
        Ok(())
    }

    /// Parses `wavelength_nm,n,k` CSV text.
    pub fn from_csv(material_name: &str, text: &str) -> Result<Self> {
        let bad = |reason: String| Error::BadTable {
            table: material_name.to_string(),
            reason,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, header)) if header.trim().replace(' ', "") == "wavelength_nm,n,k" => {}
            _ => return Err(bad("missing header `wavelength_nm,n,k`".into())),
        }
        let mut samples = Vec::new();
        for (line_no, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(bad(format!("line {}: expected 3 fields", line_no + 1)));
            }
            let mut vals = [0.0; 3];
            for (v, f) in vals.iter_mut().zip(&fields) {
                *v = f
                    .parse()
                    .map_err(|_| bad(format!("line {}: bad number {f:?}", line_no + 1)))?;
            }
            samples.push((vals[0], vals[1], vals[2]));
        }
        Self::new(material_name, samples)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("wavelength_nm,n,k\n");
        for (w, n, k) in &self.samples {
            let _ = writeln!(out, "{w},{n},{k}");
        }
        out
    }
}

/// Complex index `n + i·k` of `table` at every grid point.
///
/// `n` and `k` are interpolated independently with natural cubic splines; `k`
/// is clamped to be non-negative afterwards. Grid points outside the table are
/// an error.
pub fn index_on_grid(table: &DispersionTable, grid: &WavelengthGrid) -> Result<Vec<Complex64>> {
    table.check_covers(grid.first(), grid.last())?;
    let xs: Vec<f64> = table.samples.iter().map(|s| s.0).collect();
    let ns: Vec<f64> = table.samples.iter().map(|s| s.1).collect();
    let ks: Vec<f64> = table.samples.iter().map(|s| s.2).collect();
    let (sn, sk) = match (NaturalSpline::new(&xs, &ns), NaturalSpline::new(&xs, &ks)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::BadTable {
                table: table.material_name.clone(),
                reason: "cannot build spline".into(),
            })
        }
    };
    grid.points()
        .iter()
        .map(|&w| match (sn.eval(w), sk.eval(w)) {
            (Some(n), Some(k)) => Ok(Complex64::new(n, k.max(0.0))),
            _ => Err(Error::CoverageGap {
                table: table.material_name.clone(),
                lo: xs[0],
                hi: xs[xs.len() - 1],
                need_lo: grid.first(),
                need_hi: grid.last(),
            }),
        })
        .collect()
}

/// Substrate optical constants.
#[derive(Debug, Clone, PartialEq)]
pub enum Substrate {
    Constant(Complex64),
    Table(DispersionTable),
}

impl Substrate {
    pub fn index_on_grid(&self, grid: &WavelengthGrid) -> Result<Vec<Complex64>> {
        match self {
            Substrate::Constant(n) => Ok(vec![*n; grid.len()]),
            Substrate::Table(t) => index_on_grid(t, grid),
        }
    }
}

impl Default for Substrate {
    fn default() -> Self {
        Substrate::Constant(Complex64::new(DEFAULT_SUBSTRATE_INDEX, 0.0))
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct Manifest {
    materials: Vec<String>,
    #[serde(default)]
    substrate: Option<String>,
}

/// The 17 design materials (sorted by name; position = token id) and the
/// substrate. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialDb {
    tables: Vec<DispersionTable>,
    substrate: Substrate,
}

impl MaterialDb {
    /// Builds a database from exactly 17 tables. Tables are re-ordered by name.
    pub fn new(mut tables: Vec<DispersionTable>, substrate: Substrate) -> Result<Self> {
        if tables.len() != NUM_MATERIALS {
            return Err(Error::BadManifest(format!(
                "expected {NUM_MATERIALS} materials, found {}",
                tables.len()
            )));
        }
        tables.sort_by(|a, b| a.material_name.cmp(&b.material_name));
        if let Some(w) = tables.windows(2).find(|w| w[0].material_name == w[1].material_name) {
            return Err(Error::BadManifest(format!(
                "duplicate material {}",
                w[0].material_name
            )));
        }
        let grid = WavelengthGrid::default();
        for t in &tables {
            t.check_covers(grid.first(), grid.last())?;
        }
        if let Substrate::Table(t) = &substrate {
            t.check_covers(grid.first(), grid.last())?;
        }
        Ok(Self { tables, substrate })
    }

    /// Loads `materials.toml` and the per-material CSV files from `dir`.
    /// Either the whole database validates or nothing is returned.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = read_file(&manifest_path)?;
        let manifest: Manifest =
            toml::from_str(&text).map_err(|e| Error::BadManifest(e.to_string()))?;
        if manifest.materials.len() < NUM_MATERIALS {
            return Err(Error::BadManifest(format!(
                "fewer than {NUM_MATERIALS} materials ({})",
                manifest.materials.len()
            )));
        }
        let tables = manifest
            .materials
            .iter()
            .map(|name| {
                let path = dir.join(format!("{name}.csv"));
                DispersionTable::from_csv(name, &read_file(&path)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let substrate = match &manifest.substrate {
            Some(name) => {
                let path = dir.join(format!("{name}.csv"));
                Substrate::Table(DispersionTable::from_csv(name, &read_file(&path)?)?)
            }
            None => Substrate::default(),
        };
        Self::new(tables, substrate)
    }

    /// Writes the database in the format read by [`MaterialDb::load`].
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let substrate = match &self.substrate {
            Substrate::Table(t) => {
                write_file(&dir.join(format!("{}.csv", t.material_name)), &t.to_csv())?;
                Some(t.material_name.clone())
            }
            Substrate::Constant(_) => None,
        };
        for t in &self.tables {
            write_file(&dir.join(format!("{}.csv", t.material_name)), &t.to_csv())?;
        }
        let manifest = Manifest {
            materials: self.names().map(str::to_string).collect(),
            substrate,
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::Other(e.to_string()))?;
        write_file(&dir.join(MANIFEST_FILE), &text)
    }

    pub fn tables(&self) -> &[DispersionTable] {
        &self.tables
    }

    pub fn table(&self, id: usize) -> Result<&DispersionTable> {
        self.tables.get(id).ok_or(Error::UnknownMaterial(id))
    }

    pub fn substrate(&self) -> &Substrate {
        &self.substrate
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tables.iter().map(|t| t.material_name.as_str())
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| t.material_name == name)
    }

    /// Token name for any vocabulary id.
    pub fn token_name(&self, id: usize) -> &str {
        match id {
            PAD => "PAD",
            EOS => "EOS",
            _ => self.tables.get(id).map_or("?", |t| t.material_name.as_str()),
        }
    }

    pub fn vocab_size(&self) -> usize {
        VOCAB_SIZE
    }

    /// Short hash of the ordered material names; datasets and checkpoints
    /// carry it so files built from different vocabularies are never mixed.
    pub fn manifest_hash(&self) -> String {
        let mut h = Sha256::new();
        for name in self.names() {
            h.update(name.as_bytes());
            h.update(b"\n");
        }
        hex::encode(&h.finalize()[..8])
    }

    /// 17 lossless synthetic materials with constant indices, named `M00`..`M16`.
    pub fn constant(indices: &[f64; NUM_MATERIALS], substrate_index: f64) -> Self {
        let tables = indices
            .iter()
            .enumerate()
            .map(|(i, &n)| DispersionTable::constant(format!("M{i:02}"), n, 0.0, 300.0, 1200.0).unwrap())
            .collect();
        Self::new(tables, Substrate::Constant(Complex64::new(substrate_index, 0.0))).unwrap()
    }

    /// The shipped stand-in dispersion set (see [`standard_tables`]).
    pub fn standard() -> Self {
        Self::new(standard_tables(), Substrate::default()).expect("stand-in tables are valid")
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

const EV_NM: f64 = 1239.841_984;

fn sellmeier(l_um: f64, terms: &[(f64, f64)]) -> f64 {
    let l2 = l_um * l_um;
    (1.0 + terms.iter().map(|(b, c)| b * l2 / (l2 - c * c)).sum::<f64>()).sqrt()
}

// n + ik from a complex permittivity, k >= 0 branch.
fn from_permittivity(eps: Complex64) -> (f64, f64) {
    let s = eps.sqrt();
    if s.im < 0.0 {
        (-s.re, -s.im)
    } else {
        (s.re, s.im)
    }
}

fn drude(e_ev: f64, eps_inf: f64, wp: f64, gamma: f64) -> Complex64 {
    let w = Complex64::new(e_ev, 0.0);
    Complex64::new(eps_inf, 0.0) - wp * wp / (w * (w + Complex64::new(0.0, gamma)))
}

fn lorentz(e_ev: f64, strength: f64, w0: f64, gamma: f64) -> Complex64 {
    strength * w0 * w0 / Complex64::new(w0 * w0 - e_ev * e_ev, -e_ev * gamma)
}

fn interpolate_rows(rows: &[(f64, f64, f64)], grid: &[f64]) -> Vec<(f64, f64, f64)> {
    let xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let n = NaturalSpline::new(&xs, &rows.iter().map(|r| r.1).collect::<Vec<_>>()).unwrap();
    let k = NaturalSpline::new(&xs, &rows.iter().map(|r| r.2).collect::<Vec<_>>()).unwrap();
    grid.iter()
        .map(|&w| (w, n.eval(w).unwrap(), k.eval(w).unwrap().max(0.0)))
        .collect()
}

/// Stand-in dispersion tables for the 17 design materials, sampled every 10 nm
/// from 350 to 1150 nm.
///
/// These are NOT measured data. Dielectrics use published Sellmeier or Cauchy
/// fits, metals use Drude(-Lorentz) models, and Si/Ge use coarse smoothed
/// textbook values. They are realistic enough to exercise the design problem.
pub fn standard_tables() -> Vec<DispersionTable> {
    let wl: Vec<f64> = (0..81).map(|i| 350.0 + 10.0 * i as f64).collect();
    let from_fn = |name: &str, f: &dyn Fn(f64) -> (f64, f64)| {
        let samples = wl
            .iter()
            .map(|&w| {
                let (n, k) = f(w);
                (w, n, k.max(0.0))
            })
            .collect();
        DispersionTable::new(name, samples).unwrap()
    };
    let um = |w: f64| w / 1000.0;

    // Coarse n, k tables for the semiconductors.
    let si = [
        (340.0, 5.20, 3.05),
        (390.0, 5.90, 0.60),
        (450.0, 4.67, 0.143),
        (500.0, 4.29, 0.0727),
        (550.0, 4.08, 0.0406),
        (600.0, 3.94, 0.0249),
        (650.0, 3.85, 0.0162),
        (700.0, 3.78, 0.0108),
        (800.0, 3.69, 0.0054),
        (900.0, 3.63, 0.0022),
        (1000.0, 3.57, 0.00056),
        (1100.0, 3.54, 0.00002),
        (1160.0, 3.53, 0.0),
    ];
    let ge = [
        (340.0, 3.90, 2.00),
        (390.0, 4.10, 2.18),
        (450.0, 4.30, 2.35),
        (500.0, 4.60, 2.25),
        (550.0, 5.05, 1.95),
        (600.0, 5.60, 1.15),
        (650.0, 5.55, 0.75),
        (700.0, 5.35, 0.60),
        (800.0, 5.05, 0.45),
        (900.0, 4.85, 0.30),
        (1000.0, 4.70, 0.20),
        (1100.0, 4.60, 0.10),
        (1160.0, 4.59, 0.09),
    ];

    vec![
        from_fn("Al", &|w| from_permittivity(drude(EV_NM / w, 1.0, 14.98, 0.047))),
        from_fn("Al2O3", &|w| {
            (
                sellmeier(um(w), &[(1.431_349_3, 0.072_663_1), (0.650_547_13, 0.119_324_2), (5.341_402_1, 18.028_251)]),
                0.0,
            )
        }),
        from_fn("AlN", &|w| (sellmeier(um(w), &[(3.1399, 0.1308)]), 0.0)),
        DispersionTable::new("Ge", interpolate_rows(&ge, &wl)).unwrap(),
        from_fn("HfO2", &|w| (1.875 + 0.0139 / um(w).powi(2), 0.0)),
        from_fn("ITO", &|w| from_permittivity(drude(EV_NM / w, 3.9, 1.95, 0.12))),
        from_fn("MgF2", &|w| {
            (
                sellmeier(um(w), &[(0.487_551_08, 0.043_384_08), (0.398_750_31, 0.094_614_42), (2.312_035_3, 23.793_604)]),
                0.0,
            )
        }),
        from_fn("MgO", &|w| {
            (
                sellmeier(um(w), &[(1.111_033, 0.071_246_5), (0.846_008_5, 0.122_413_7), (7.808_527, 26.892_49)]),
                0.0,
            )
        }),
        DispersionTable::new("Si", interpolate_rows(&si, &wl)).unwrap(),
        from_fn("Si3N4", &|w| (sellmeier(um(w), &[(3.0249, 0.135_340_6), (40314.0, 1239.842)]), 0.0)),
        from_fn("SiO2", &|w| {
            (
                sellmeier(um(w), &[(0.696_166_3, 0.068_404_3), (0.407_942_6, 0.116_241_4), (0.897_479_4, 9.896_161)]),
                0.0,
            )
        }),
        from_fn("Ta2O5", &|w| (2.06 + 0.0225 / um(w).powi(2) + 0.0016 / um(w).powi(4), 0.0)),
        from_fn("TiN", &|w| {
            let e = EV_NM / w;
            from_permittivity(drude(e, 2.485, 5.953, 0.5142) + lorentz(e, 2.0376, 3.9545, 2.4852))
        }),
        from_fn("TiO2", &|w| {
            let l2 = um(w).powi(2);
            ((5.913 + 0.2441 / (l2 - 0.0803)).sqrt(), 0.0)
        }),
        from_fn("ZnO", &|w| {
            let l2 = um(w).powi(2);
            (
                (2.814_18 + 0.879_68 * l2 / (l2 - 0.3042 * 0.3042) - 0.007_11 * l2).sqrt(),
                0.05 * (-(w - 380.0) / 8.0).exp().min(1.0),
            )
        }),
        from_fn("ZnS", &|w| {
            let l2 = um(w).powi(2);
            ((8.393 + 0.143_83 / (l2 - 0.2421 * 0.2421) + 4430.99 / (l2 - 36.71 * 36.71)).sqrt(), 0.0)
        }),
        from_fn("ZnSe", &|w| {
            let l2 = um(w).powi(2);
            ((4.0 + 1.90 * l2 / (l2 - 0.113)).sqrt(), 0.4 / (1.0 + ((w - 455.0) / 8.0).exp()))
        }),
    ]
}
