//! Random training designs and the line-oriented dataset file.
//!
//! File layout (UTF-8):
//!
//! ```text
//! # prism-dataset v1 grid=400:1100:71 materials=<hash>
//! 3 16 9;120 40 310;0.0123 ... 0.9012
//! ```
//!
//! One record per line with three `;`-separated fields: space-separated
//! material ids, space-separated thicknesses in nm, and the 142 spectrum
//! values (reflectance block, then transmittance). Numbers are written with
//! shortest round-trip formatting, so reading a file back is lossless.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::materials::{WavelengthGrid, NUM_MATERIALS};
use crate::rng::{stream_rng, sub_stream, Rng};
use crate::tmm::{Design, Simulator, Spectrum};
use crate::{Error, Result};

pub const FORMAT_VERSION: &str = "v1";
/// First bytes of every dataset file.
pub const MAGIC: &str = "# prism-dataset";
const MAX_ATTEMPTS: u64 = 16;

/// Training distribution over designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub min_layers: usize,
    pub max_layers: usize,
    pub thickness_min: f64,
    pub thickness_max: f64,
    pub thickness_step: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            min_layers: 1,
            max_layers: 20,
            thickness_min: 10.0,
            thickness_max: 500.0,
            thickness_step: 10.0,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_layers < 1 || self.min_layers > self.max_layers {
            return Err(Error::Config(format!(
                "layer range {}..={} is empty",
                self.min_layers, self.max_layers
            )));
        }
        if self.max_layers > crate::tmm::MAX_LAYERS {
            return Err(Error::Config(format!("max_layers {} too large", self.max_layers)));
        }
        if !(self.thickness_min > 0.0 && self.thickness_step > 0.0 && self.thickness_max >= self.thickness_min) {
            return Err(Error::Config("thickness range must be positive".into()));
        }
        let steps = (self.thickness_max - self.thickness_min) / self.thickness_step;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "step {} does not divide {}..{}",
                self.thickness_step, self.thickness_min, self.thickness_max
            )));
        }
        Ok(())
    }

    fn thickness_levels(&self) -> u32 {
        ((self.thickness_max - self.thickness_min) / self.thickness_step).round() as u32
    }
}

/// Draws one design: `P(L) ∝ L` over the layer range, then i.i.d. uniform
/// materials and i.i.d. uniform thicknesses on the discrete grid.
pub fn sample_design(rng: &mut Rng, config: &SamplerConfig) -> Design {
    let total: usize = (config.min_layers..=config.max_layers).sum();
    let mut u = rng.gen_range(0..total);
    let mut layers = config.min_layers;
    while u >= layers {
        u -= layers;
        layers += 1;
    }
    let levels = config.thickness_levels();
    let mut materials = Vec::with_capacity(layers);
    let mut thicknesses = Vec::with_capacity(layers);
    for _ in 0..layers {
        materials.push(rng.gen_range(0..NUM_MATERIALS));
        thicknesses.push(config.thickness_min + config.thickness_step * rng.gen_range(0..=levels) as f64);
    }
    Design::new(materials, thicknesses).expect("sampler config validated")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub design: Design,
    pub spectrum: Spectrum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GenerationSummary {
    pub count: usize,
    /// Simulation failures that forced a resample.
    pub failures: usize,
}

/// Sample `index` of a dataset seeded with `config.seed`. Retries with a fresh
/// sub-stream if simulation fails; returns the sample and the failure count.
pub fn generate_sample(index: u64, config: &SamplerConfig, sim: &Simulator) -> Result<(Sample, usize)> {
    let mut failures = 0;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = stream_rng(config.seed, sub_stream(index, attempt));
        let design = sample_design(&mut rng, config);
        match sim.simulate(&design) {
            Ok(spectrum) => return Ok((Sample { design, spectrum }, failures)),
            Err(_) => failures += 1,
        }
    }
    Err(Error::Other(format!("sample {index}: simulation failed {MAX_ATTEMPTS} times")))
}

/// Generates `n` samples in memory (parallel, order = sample index).
pub fn generate_samples(n: usize, config: &SamplerConfig, sim: &Simulator) -> Result<(Vec<Sample>, usize)> {
    config.validate()?;
    let results: Vec<_> = (0..n as u64)
        .into_par_iter()
        .map(|i| generate_sample(i, config, sim))
        .collect();
    let mut samples = Vec::with_capacity(n);
    let mut failures = 0;
    for r in results {
        let (s, f) = r?;
        samples.push(s);
        failures += f;
    }
    Ok((samples, failures))
}

/// Writes `n` samples to `output_path`. Samples are generated in parallel but
/// written in index order, so the file is byte-identical for a given seed.
pub fn generate_dataset(
    n: usize,
    config: &SamplerConfig,
    sim: &Simulator,
    manifest_hash: &str,
    output_path: impl AsRef<Path>,
) -> Result<GenerationSummary> {
    config.validate()?;
    let mut writer = DatasetWriter::create(output_path, sim.grid(), manifest_hash)?;
    let mut failures = 0;
    const CHUNK: usize = 4096;
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let chunk: Vec<_> = (start as u64..end as u64)
            .into_par_iter()
            .map(|i| generate_sample(i, config, sim))
            .collect();
        for r in chunk {
            let (sample, f) = r?;
            failures += f;
            writer.write(&sample)?;
        }
        start = end;
    }
    writer.finish()?;
    Ok(GenerationSummary { count: n, failures })
}

/// Header line metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub version: String,
    pub grid: WavelengthGrid,
    pub manifest_hash: String,
}

impl DatasetHeader {
    fn render(&self) -> String {
        format!(
            "{MAGIC} {} grid={} materials={}",
            self.version,
            self.grid.descriptor(),
            self.manifest_hash
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let bad = |reason: &str| Error::MalformedRecord {
            index: 0,
            reason: format!("header: {reason}"),
        };
        let rest = line.strip_prefix(MAGIC).ok_or_else(|| bad("missing magic"))?;
        let mut parts = rest.split_whitespace();
        let version = parts.next().ok_or_else(|| bad("missing version"))?.to_string();
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: FORMAT_VERSION.into(),
                found: version,
            });
        }
        let mut grid = None;
        let mut hash = None;
        for p in parts {
            if let Some(g) = p.strip_prefix("grid=") {
                grid = Some(WavelengthGrid::from_descriptor(g)?);
            } else if let Some(h) = p.strip_prefix("materials=") {
                hash = Some(h.to_string());
            }
        }
        Ok(Self {
            version,
            grid: grid.ok_or_else(|| bad("missing grid"))?,
            manifest_hash: hash.ok_or_else(|| bad("missing materials hash"))?,
        })
    }
}

pub struct DatasetWriter {
    out: BufWriter<File>,
    path: PathBuf,
    line: String,
}

impl DatasetWriter {
    pub fn create(path: impl AsRef<Path>, grid: &WavelengthGrid, manifest_hash: &str) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = Self {
            out: BufWriter::new(file),
            path,
            line: String::new(),
        };
        let header = DatasetHeader {
            version: FORMAT_VERSION.into(),
            grid: grid.clone(),
            manifest_hash: manifest_hash.into(),
        };
        writeln!(w.out, "{}", header.render()).map_err(|e| Error::io(&w.path, e))?;
        Ok(w)
    }

    pub fn write(&mut self, sample: &Sample) -> Result<()> {
        self.line.clear();
        format_record(&mut self.line, &sample.design, sample.spectrum.values());
        self.out
            .write_all(self.line.as_bytes())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn join<T: std::fmt::Display>(out: &mut String, items: impl IntoIterator<Item = T>) {
    for (i, v) in items.into_iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v}");
    }
}

fn format_record(out: &mut String, design: &Design, spectrum: &[f64]) {
    join(out, design.materials());
    out.push(';');
    join(out, design.thicknesses());
    out.push(';');
    join(out, spectrum);
    out.push('\n');
}

fn parse_record(line: &str, index: usize, spectrum_len: usize) -> Result<Sample> {
    let bad = |reason: String| Error::MalformedRecord { index, reason };
    let fields: Vec<&str> = line.split(';').collect();
    if fields.len() != 3 {
        return Err(bad(format!("expected 3 fields, found {}", fields.len())));
    }
    let materials = fields[0]
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| bad(format!("bad material id {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let thicknesses = fields[1]
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad thickness {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let spectrum = fields[2]
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad spectrum value {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if spectrum.len() != spectrum_len {
        return Err(bad(format!(
            "expected {spectrum_len} spectrum values, found {}",
            spectrum.len()
        )));
    }
    let design = Design::new(materials, thicknesses).map_err(|e| bad(e.to_string()))?;
    let spectrum = Spectrum::new(spectrum).map_err(|e| bad(e.to_string()))?;
    Ok(Sample { design, spectrum })
}

/// Streaming reader. Yields records in file order; a malformed record is
/// reported with its zero-based index and the records before it remain usable.
pub struct DatasetReader {
    header: DatasetHeader,
    lines: std::io::Lines<BufReader<File>>,
    index: usize,
    spectrum_len: usize,
    failed: bool,
}

impl DatasetReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(path.to_path_buf())
            } else {
                Error::io(path, e)
            }
        })?;
        let mut lines = BufReader::new(file).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::MalformedRecord {
                index: 0,
                reason: "empty file".into(),
            })?
            .map_err(|e| Error::io(path, e))?;
        let header = DatasetHeader::parse(&first)?;
        let spectrum_len = 2 * header.grid.len();
        Ok(Self {
            header,
            lines,
            index: 0,
            spectrum_len,
            failed: false,
        })
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }
}

impl Iterator for DatasetReader {
    type Item = Result<Sample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let line = match self.lines.next()? {
            Ok(l) => l,
            Err(e) => {
                self.failed = true;
                return Some(Err(Error::MalformedRecord {
                    index: self.index,
                    reason: e.to_string(),
                }));
            }
        };
        let r = parse_record(&line, self.index, self.spectrum_len);
        self.failed = r.is_err();
        self.index += 1;
        Some(r)
    }
}

/// Opens `path` and streams its samples.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<DatasetReader> {
    DatasetReader::open(path)
}

/// Reads every sample, failing on the first malformed record.
pub fn read_all(path: impl AsRef<Path>) -> Result<(DatasetHeader, Vec<Sample>)> {
    let reader = DatasetReader::open(path)?;
    let header = reader.header().clone();
    let samples = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, samples))
}
