use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_json, unix_now, write_json, OrchestratorError, SCHEMA_VERSION};
use crate::backend::Context;

/// One unit of resumable work: every profiling prompt of one
/// (dimension, context, budget, experiment trial), across steering trials.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub dimension: String,
    pub context: Context,
    pub budget_k: usize,
    pub trial: usize,
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/k={}/trial={}",
            self.dimension, self.context, self.budget_k, self.trial
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Pending,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub dimension: String,
    pub context: Context,
    pub budget_k: usize,
    pub trial: usize,
    pub status: CellStatus,
    pub requests: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "detail")]
pub enum ModelStatus {
    Running,
    Interrupted,
    Complete,
    Aborted(String),
}

/// Progress record of one model's sweep. Owned by a single writer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub model: String,
    pub config_digest: String,
    pub dataset_digests: BTreeMap<String, String>,
    pub status: ModelStatus,
    pub cells: BTreeMap<String, CellRecord>,
    pub failed_dimensions: BTreeMap<String, String>,
    pub backend_calls: u64,
    pub cache_hits: u64,
    pub call_budget: u64,
    pub budgets: Vec<usize>,
    pub experiment_trials: usize,
    pub started_at: u64,
    pub updated_at: u64,
}

impl RunManifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn new(model: &str, config_digest: String, dataset_digests: BTreeMap<String, String>) -> Self {
        let now = unix_now();
        Self {
            schema_version: SCHEMA_VERSION,
            model: model.to_owned(),
            config_digest,
            dataset_digests,
            status: ModelStatus::Running,
            cells: BTreeMap::new(),
            failed_dimensions: BTreeMap::new(),
            backend_calls: 0,
            cache_hits: 0,
            call_budget: 0,
            budgets: Vec::new(),
            experiment_trials: 0,
            started_at: now,
            updated_at: now,
        }
    }

    pub fn load(model_dir: &Path) -> Result<Self, OrchestratorError> {
        read_json(&model_dir.join(Self::FILE))
    }

    pub fn save(&mut self, model_dir: &Path) -> Result<(), OrchestratorError> {
        self.updated_at = unix_now();
        write_json(&model_dir.join(Self::FILE), self)
    }

    pub fn register(&mut self, key: &CellKey, requests: usize) {
        self.cells.entry(key.to_string()).or_insert_with(|| CellRecord {
            dimension: key.dimension.clone(),
            context: key.context,
            budget_k: key.budget_k,
            trial: key.trial,
            status: CellStatus::Pending,
            requests,
        });
    }

    pub fn set_status(&mut self, key: &CellKey, status: CellStatus) {
        if let Some(cell) = self.cells.get_mut(&key.to_string()) {
            cell.status = status;
        }
    }

    pub fn incomplete_cells(&self) -> Vec<String> {
        self.cells
            .iter()
            .filter(|(_, c)| c.status != CellStatus::Complete && !self.failed_dimensions.contains_key(&c.dimension))
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn completed(&self) -> usize {
        self.cells.values().filter(|c| c.status == CellStatus::Complete).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::Direction;

    #[test]
    fn cells_round_trip_and_track_completion() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("toy", "abc".into(), BTreeMap::new());
        let a = CellKey {
            dimension: "d".into(),
            context: Context::Baseline,
            budget_k: 0,
            trial: 0,
        };
        let b = CellKey {
            dimension: "d".into(),
            context: Context::Steered(Direction::Negative),
            budget_k: 2,
            trial: 1,
        };
        m.register(&a, 10);
        m.register(&b, 30);
        m.set_status(&a, CellStatus::Complete);
        assert_eq!(m.incomplete_cells(), vec!["d/negative/k=2/trial=1".to_string()]);
        m.save(dir.path()).unwrap();
        let loaded = RunManifest::load(dir.path()).unwrap();
        assert_eq!(loaded, m);
        assert_eq!(loaded.completed(), 1);
    }
}
