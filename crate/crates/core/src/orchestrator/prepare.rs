use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_json, unix_now, write_atomic, write_json, OrchestratorError, SCHEMA_VERSION};
use crate::persona::{
    filter_dimensions, load_raw_dir, split_dimension, write_processed_csv, DimensionDataset, FilterPolicy, ParseMode,
};

pub const DEFAULT_STEERING_PER_DIRECTION: usize = 100;

const DATASET_FILE: &str = "dataset.json";
const MANIFEST_FILE: &str = "manifest.json";
const PROCESSED_FILE: &str = "processed.csv";

#[derive(Debug, Clone)]
pub struct PrepareOptions {
    pub policy: FilterPolicy,
    pub seed: u64,
    pub steering_per_direction: usize,
    pub parse_mode: ParseMode,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            policy: FilterPolicy::default(),
            seed: 0,
            steering_per_direction: DEFAULT_STEERING_PER_DIRECTION,
            parse_mode: ParseMode::Strict,
        }
    }
}

/// Split datasets for every surviving dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub schema_version: u32,
    pub seed: u64,
    pub policy: FilterPolicy,
    pub steering_per_direction: usize,
    pub dimensions: BTreeMap<String, DimensionDataset>,
    /// Dimensions that passed the filter but could not be split, with why.
    #[serde(default)]
    pub skipped: BTreeMap<String, String>,
}

/// Summary written next to the bundle: what went in and the split digests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub policy: FilterPolicy,
    pub steering_per_direction: usize,
    pub input_dimensions: usize,
    pub digests: BTreeMap<String, String>,
    pub skipped: BTreeMap<String, String>,
    pub created_at: u64,
}

impl DatasetBundle {
    pub fn digests(&self) -> BTreeMap<String, String> {
        self.dimensions.iter().map(|(d, ds)| (d.clone(), ds.digest())).collect()
    }

    pub fn dataset_path(dir: &Path) -> PathBuf {
        dir.join(DATASET_FILE)
    }

    pub fn load(dir: &Path) -> Result<Self, OrchestratorError> {
        let path = Self::dataset_path(dir);
        if !path.exists() {
            return Err(OrchestratorError::MissingDataset(dir.to_path_buf()));
        }
        read_json(&path)
    }

    /// Writes `dataset.json`, `processed.csv` and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path, input_dimensions: usize) -> Result<DataManifest, OrchestratorError> {
        std::fs::create_dir_all(dir)?;
        write_json(&Self::dataset_path(dir), self)?;
        let mut csv = Vec::new();
        write_processed_csv(
            &mut csv,
            self.dimensions.values().flat_map(|d| {
                d.steering_pos
                    .iter()
                    .chain(&d.steering_neg)
                    .chain(&d.profiling_pos)
                    .chain(&d.profiling_neg)
            }),
        )?;
        write_atomic(&dir.join(PROCESSED_FILE), &csv)?;
        let manifest = DataManifest {
            schema_version: SCHEMA_VERSION,
            seed: self.seed,
            policy: self.policy.clone(),
            steering_per_direction: self.steering_per_direction,
            input_dimensions,
            digests: self.digests(),
            skipped: self.skipped.clone(),
            created_at: unix_now(),
        };
        write_json(&dir.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }
}

/// Loads raw upstream records, filters, splits, and (when `out_dir` is
/// given) persists the bundle.
pub fn prepare_data(
    raw_dir: &Path,
    options: &PrepareOptions,
    out_dir: Option<&Path>,
) -> Result<DatasetBundle, OrchestratorError> {
    options.policy.validate()?;
    let groups = load_raw_dir(raw_dir, options.parse_mode)?;
    let pruned = filter_dimensions(&groups, &options.policy);
    log::info!("{} of {} dimensions pass the filter policy", pruned.len(), groups.len());
    let mut dimensions = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    for (name, p) in &pruned {
        match split_dimension(name, p, options.seed, options.steering_per_direction) {
            Ok(ds) => {
                dimensions.insert(name.clone(), ds);
            }
            Err(e) => {
                log::warn!("skipping {name}: {e}");
                skipped.insert(name.clone(), e.to_string());
            }
        }
    }
    let bundle = DatasetBundle {
        schema_version: SCHEMA_VERSION,
        seed: options.seed,
        policy: options.policy.clone(),
        steering_per_direction: options.steering_per_direction,
        dimensions,
        skipped,
    };
    if let Some(dir) = out_dir {
        bundle.write(dir, groups.len())?;
    }
    Ok(bundle)
}
