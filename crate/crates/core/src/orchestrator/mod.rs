//! Experiment engine: dataset preparation, benchmark sweeps with resumable
//! manifests, and report generation.

mod config;
mod manifest;
mod prepare;
mod report;
mod run;

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::backend::BackendError;
use crate::catalog::CatalogError;
use crate::metrics::MetricsError;
use crate::persona::PersonaError;
use crate::profile::ProfileError;
use crate::prompt::PromptError;

pub use config::{DimensionSelection, ExperimentConfig};
pub use manifest::{CellKey, CellRecord, CellStatus, ModelStatus, RunManifest};
pub use prepare::{prepare_data, DataManifest, DatasetBundle, PrepareOptions, DEFAULT_STEERING_PER_DIRECTION};
pub use report::{curves_only, load_bundle, report, write_combined_one_shot, ReportFormat, ReportManifest};
pub use run::{run_benchmark, ModelOutcome, ProfileRecord, ResultBundle, RunControl, RunOutcome};

/// Version stamped on every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("no dataset bundle at {0}; run prepare-data first")]
    MissingDataset(PathBuf),
    #[error("{model}: bundle incomplete, missing cells: {}", missing.join(", "))]
    IncompleteBundle { model: String, missing: Vec<String> },
}

/// Writes pretty JSON via a temporary file and rename.
pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), OrchestratorError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), OrchestratorError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, OrchestratorError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub(crate) fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}
