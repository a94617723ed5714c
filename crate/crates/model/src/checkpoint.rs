//! Checkpoint directories: `manifest.json` plus `params.bin`.
//!
//! `params.bin` holds little-endian f64 arrays in manifest tensor order,
//! first the parameters, then (if present) the Adam first and second moments.
//! Training randomness is a function of `(seed, step)`, so the seed in the
//! train config and the step counter are the whole RNG state.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::params::ModelParams;
use crate::train::{AdamState, TrainConfig};
use crate::{ModelError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const PARAMS: &str = "params.bin";
const FORMAT: &str = "prism-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    dtype: String,
    model: ModelConfig,
    train: TrainConfig,
    step: usize,
    materials: String,
    sections: Vec<String>,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Completed optimisation steps.
    pub step: usize,
    /// Hash of the material set the model was trained on.
    pub manifest_hash: String,
    pub params: ModelParams,
    pub adam: Option<AdamState>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let io = |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    };
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|source| ModelError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut sections = vec!["params".to_string()];
        let mut blobs = vec![&self.params];
        if let Some(adam) = &self.adam {
            sections.extend(["adam_m".to_string(), "adam_v".to_string()]);
            blobs.extend([&adam.m, &adam.v]);
        }
        let mut bytes = Vec::with_capacity(blobs.len() * self.params.count() * 8);
        for p in blobs {
            for v in p.flatten() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            format: FORMAT.into(),
            version: VERSION,
            dtype: "f64le".into(),
            model: self.model.clone(),
            train: self.train.clone(),
            step: self.step,
            materials: self.manifest_hash.clone(),
            sections,
            tensors: self
                .params
                .names_and_shapes()
                .into_iter()
                .map(|(name, shape)| TensorEntry { name, shape })
                .collect(),
        };
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serialises");
        write_atomic(&dir.join(PARAMS), &bytes)?;
        write_atomic(&dir.join(MANIFEST), &json)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let fail = |reason: String| ModelError::Checkpoint {
            path: dir.to_path_buf(),
            reason,
        };
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read(&p).map_err(|source| ModelError::Io { path: p, source })
        };
        let manifest: Manifest =
            serde_json::from_slice(&read(MANIFEST)?).map_err(|e| fail(format!("bad manifest: {e}")))?;
        if manifest.format != FORMAT || manifest.version != VERSION || manifest.dtype != "f64le" {
            return Err(fail(format!(
                "unsupported format {} v{} ({})",
                manifest.format, manifest.version, manifest.dtype
            )));
        }
        manifest.model.validate()?;
        let mut params = ModelParams::new(&manifest.model, 0)?;
        let expected: Vec<(String, Vec<usize>)> = manifest.tensors.iter().map(|t| (t.name.clone(), t.shape.clone())).collect();
        if params.names_and_shapes() != expected {
            return Err(fail("tensor list does not match the model config".into()));
        }
        let bytes = read(PARAMS)?;
        let n = params.count();
        if bytes.len() != manifest.sections.len() * n * 8 {
            return Err(fail(format!(
                "{PARAMS} has {} bytes, expected {}",
                bytes.len(),
                manifest.sections.len() * n * 8
            )));
        }
        let floats: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        params.unflatten(&floats[..n]);
        if !params.is_finite() {
            return Err(fail("non-finite parameters".into()));
        }
        let adam = match manifest.sections.as_slice() {
            [p] if p == "params" => None,
            [p, m, v] if p == "params" && m == "adam_m" && v == "adam_v" => {
                let mut am = params.zeros_like();
                am.unflatten(&floats[n..2 * n]);
                let mut av = params.zeros_like();
                av.unflatten(&floats[2 * n..]);
                Some(AdamState { m: am, v: av })
            }
            other => return Err(fail(format!("unknown sections {other:?}"))),
        };
        Ok(Self {
            model: manifest.model,
            train: manifest.train,
            step: manifest.step,
            manifest_hash: manifest.materials,
            params,
            adam,
        })
    }
}
