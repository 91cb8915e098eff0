//! Small file-writing helpers shared by the CSV and model-document writers.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Write `contents` to `path` via a sibling temp file plus rename, so a
/// failed write never leaves a partial file behind.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = sibling_tmp_path(path);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn sibling_tmp_path(path: &Path) -> std::path::PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_else(|| ".out".into());
    name.push(".tmp");
    path.with_file_name(name)
}

/// Format a float so that parsing the string recovers the identical f64.
/// Rust's shortest-round-trip formatting never needs more than 17
/// significant digits.
pub fn fmt_f64(value: f64) -> String {
    // The writers all validate finiteness first; this is just a debug guard.
    debug_assert!(value.is_finite(), "attempted to serialize non-finite value");
    value.to_string()
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
