//! On-disk formats: datasets, checkpoints, reports and CSV exports.

mod checkpoint;
mod csv;
mod dataset;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::Result;

pub use checkpoint::{
    load_bound_report, load_composite, load_coupling, load_model, load_model_expecting,
    save_bound_report, save_composite, save_coupling, save_model, CompositeManifest,
};
pub use csv::{
    history_csv, save_history_csv, save_table_csv, save_trajectory_csv, table_csv, trajectory_csv,
};
pub use dataset::{load_dataset, save_dataset, Dataset, DatasetMetadata, Trajectory};

/// Version written into every JSON file and required when reading.
pub const FORMAT_VERSION: u32 = 1;

/// Writes `bytes` to a temporary sibling of `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &serde_json::to_vec_pretty(value)?)
}
