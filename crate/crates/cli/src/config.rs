//! Layered configuration: JSON file, then `--set` overrides, then the
//! dedicated flags of each subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use obdguard_core::{Error, PipelineConfig};
use serde_json::{Map, Value};

use crate::CliError;

/// Reads a JSON file, mapping failures to I/O errors that carry the path.
pub fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() }.into())
}

pub fn from_value<T: serde::de::DeserializeOwned>(value: Value, origin: &Path) -> Result<T, CliError> {
    serde_json::from_value(value)
        .map_err(|e| Error::Format { path: origin.to_path_buf(), message: e.to_string() }.into())
}

/// Applies one `key.path=value` override. The value is parsed as JSON and
/// falls back to a plain string, so `out_dir=runs/a` needs no quoting.
pub fn apply_override(root: &mut Value, entry: &str) -> Result<(), CliError> {
    let (key, raw) = entry
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{entry}` is not of the form key=value")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Usage(format!("override `{entry}` has an empty key segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));

    let mut node = root;
    for part in key.split('.') {
        if !node.is_object() {
            *node = Value::Object(Map::new());
        }
        node = node
            .as_object_mut()
            .expect("just made an object")
            .entry(part)
            .or_insert(Value::Null);
    }
    *node = value;
    Ok(())
}

/// The effective pipeline configuration for this invocation.
pub fn load(path: Option<&PathBuf>, overrides: &[String]) -> Result<PipelineConfig, CliError> {
    let origin = path.cloned().unwrap_or_else(|| PathBuf::from("<command line>"));
    let mut value = match path {
        Some(p) => read_json(p)?,
        None => Value::Object(Map::new()),
    };
    for entry in overrides {
        apply_override(&mut value, entry)?;
    }
    from_value(value, &origin)
}
