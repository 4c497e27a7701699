use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_csv, write_csv, Split, SyntheticSpec};
use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    /// Path of the CSV, relative to the manifest's directory.
    pub file: PathBuf,
    pub frequency: String,
    pub seasonal_period: usize,
    pub split_index: usize,
    pub rows: usize,
    pub channels: usize,
}

/// Index of a corpus directory: one CSV per dataset plus its metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub version: String,
    /// Generator settings when the corpus is synthetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    pub datasets: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::SchemaVersionMismatch {
                expected: MANIFEST_SCHEMA_VERSION,
                found: m.schema_version,
            });
        }
        Ok(m)
    }

    /// Reads the manifest at `path` and loads every dataset it lists.
    pub fn load_datasets<S: Scalar>(path: &Path) -> Result<Vec<Dataset<S>>> {
        let m = Self::read(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        m.datasets
            .iter()
            .map(|e| {
                let d: Dataset<S> = load_csv(
                    dir.join(&e.file),
                    &e.name,
                    &e.frequency,
                    e.seasonal_period,
                    Split::TrainRows(e.split_index),
                )?;
                if d.len() != e.rows || d.channels() != e.channels {
                    return Err(Error::shape(
                        format!("{} x {} in {}", e.rows, e.channels, e.name),
                        format!("{} x {}", d.len(), d.channels()),
                    ));
                }
                Ok(d)
            })
            .collect()
    }
}

/// Generates the synthetic corpus into `dir` as timestamped CSVs plus a
/// `manifest.json`. The directory must exist.
pub fn write_synthetic_corpus(spec: &SyntheticSpec, dir: &Path) -> Result<Manifest> {
    let datasets: Vec<Dataset<f64>> = generate_synthetic(spec)?;
    let mut entries = Vec::with_capacity(datasets.len());
    for d in &datasets {
        let file = PathBuf::from(format!("{}.csv", d.name()));
        write_csv(d, dir.join(&file), Some(&spec.timestamps(d.len())))?;
        entries.push(ManifestEntry {
            name: d.name().to_string(),
            file,
            frequency: d.frequency().to_string(),
            seasonal_period: d.seasonal_period(),
            split_index: d.split_index(),
            rows: d.len(),
            channels: d.channels(),
        });
    }
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION").to_string(),
        synthetic: Some(spec.clone()),
        datasets: entries,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
