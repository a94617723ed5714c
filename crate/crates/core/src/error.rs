use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{table}: non-monotone wavelengths at sample {index}")]
    NonMonotone { table: String, index: usize },
    #[error("{table}: coverage gap, table spans {lo}..{hi} nm but grid needs {need_lo}..{need_hi} nm")]
    CoverageGap {
        table: String,
        lo: f64,
        hi: f64,
        need_lo: f64,
        need_hi: f64,
    },
    #[error("{table}: {reason}")]
    BadTable { table: String, reason: String },
    #[error("material db: {0}")]
    BadManifest(String),
    #[error("wavelength grid: {0}")]
    BadGrid(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("unknown material id {0}")]
    UnknownMaterial(usize),
    #[error("simulation produced non-physical values at {wavelength} nm")]
    NonPhysical { wavelength: f64 },
    #[error("malformed record {index}: {reason}")]
    MalformedRecord { index: usize, reason: String },
    #[error("dataset version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Other(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
