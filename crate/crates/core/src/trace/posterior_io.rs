use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dpmixreg::{Draw, HyperParams, PosteriorSamples};
use crate::error::{Error, Result};

pub const POSTERIOR_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct PosteriorFileRef<'a> {
    version: u32,
    hyperparams: &'a HyperParams,
    n_records_fitted: usize,
    draws: &'a [Draw],
}

#[derive(Deserialize)]
struct PosteriorFile {
    hyperparams: HyperParams,
    #[serde(default)]
    n_records_fitted: usize,
    draws: Vec<Draw>,
}

/// Writes posterior draws as JSON
/// `{version, hyperparams, n_records_fitted, draws:[{alpha, components:[{pi, beta, sigma2}]}]}`.
pub fn save_posterior(samples: &PosteriorSamples, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if samples.draws.is_empty() {
        return Err(Error::Precondition("refusing to save an empty posterior".into()));
    }
    let file = PosteriorFileRef {
        version: POSTERIOR_SCHEMA_VERSION,
        hyperparams: &samples.hyperparams,
        n_records_fitted: samples.n_records_fitted,
        draws: &samples.draws,
    };
    let json = serde_json::to_vec(&file).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_posterior(path: impl AsRef<Path>) -> Result<PosteriorSamples> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format_err = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let value: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| format_err(e.to_string()))?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(POSTERIOR_SCHEMA_VERSION) => {}
        Some(v) => {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: v.to_string(),
                expected: POSTERIOR_SCHEMA_VERSION.to_string(),
            })
        }
        None => return Err(format_err("missing integer field `version`".into())),
    }
    let file: PosteriorFile = serde_json::from_value(value).map_err(|e| format_err(e.to_string()))?;
    let samples = PosteriorSamples {
        hyperparams: file.hyperparams,
        draws: file.draws,
        n_records_fitted: file.n_records_fitted,
    };
    samples.validate().map_err(|e| format_err(e.to_string()))?;
    Ok(samples)
}
