use std::fs;
use std::path::{Path, PathBuf};

use log::debug;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{fit_surrogate, EncodedMatrix, SurrogateKind, SurrogateModel, SurrogateParams};
use crate::error::{Error, Result};
use crate::io::write_atomic;

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    model: SurrogateModel,
}

/// On-disk store of fitted surrogates, one file per
/// (algorithm, dataset, measure). An entry is reused only when the hash of
/// the training slice and fitting parameters matches.
#[derive(Debug, Clone)]
pub struct SurrogateCache {
    dir: PathBuf,
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

impl SurrogateCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(SurrogateCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, algorithm: &str, data: &EncodedMatrix) -> PathBuf {
        self.dir.join(format!(
            "{}__{}__{}.json",
            sanitize(algorithm),
            sanitize(&data.dataset_id),
            data.measure
        ))
    }

    /// Content hash of the slice plus everything that influences the fit.
    pub fn key(
        algorithm: &str,
        data: &EncodedMatrix,
        kind: SurrogateKind,
        params: &SurrogateParams,
        seed: u64,
    ) -> Result<String> {
        let mut h = Sha256::new();
        h.update(algorithm.as_bytes());
        h.update([0]);
        h.update(data.dataset_id.as_bytes());
        h.update([0]);
        h.update(data.measure.name().as_bytes());
        h.update([0]);
        h.update(kind.name().as_bytes());
        h.update(serde_json::to_vec(params)?);
        h.update(seed.to_le_bytes());
        for name in data.encoder.column_names() {
            h.update(name.as_bytes());
            h.update([0]);
        }
        h.update((data.rows() as u64).to_le_bytes());
        for v in data.x.data().iter().chain(&data.y) {
            h.update(v.to_bits().to_le_bytes());
        }
        Ok(hex::encode(h.finalize()))
    }

    /// Returns the cached model when its key matches, otherwise fits and
    /// stores a fresh one.
    pub fn get_or_fit(
        &self,
        algorithm: &str,
        data: &EncodedMatrix,
        kind: SurrogateKind,
        params: &SurrogateParams,
        seed: u64,
    ) -> Result<SurrogateModel> {
        let key = Self::key(algorithm, data, kind, params, seed)?;
        let path = self.path(algorithm, data);
        if let Ok(text) = fs::read(&path) {
            match serde_json::from_slice::<Entry>(&text) {
                Ok(entry) if entry.key == key => {
                    debug!("surrogate cache hit: {}", path.display());
                    return Ok(entry.model);
                }
                Ok(_) => debug!("surrogate cache stale: {}", path.display()),
                Err(e) => debug!("surrogate cache unreadable ({e}): {}", path.display()),
            }
        }
        let model = fit_surrogate(kind, data, params, seed)?;
        let entry = Entry { key, model };
        write_atomic(&path, &serde_json::to_vec(&entry)?)?;
        Ok(entry.model)
    }
}
