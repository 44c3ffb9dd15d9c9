use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::OrchestratorError;
use crate::backend::BackendConfig;
use crate::metrics::{AverageMode, DEFAULT_RESOLUTION, ONE_SHOT_CATEGORIES};
use crate::profile::Prior;

/// `"all"` or an explicit list of dimension names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimensionSelection {
    Keyword(String),
    List(Vec<String>),
}

impl Default for DimensionSelection {
    fn default() -> Self {
        DimensionSelection::Keyword("all".into())
    }
}

impl DimensionSelection {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn parse_csv(s: &str) -> Self {
        if s.trim().eq_ignore_ascii_case("all") {
            Self::all()
        } else {
            DimensionSelection::List(
                s.split(',')
                    .map(|d| d.trim().to_owned())
                    .filter(|d| !d.is_empty())
                    .collect(),
            )
        }
    }

    /// Resolves against the available dimensions, erroring on names that
    /// are not available.
    pub fn resolve<'a>(
        &self,
        available: impl IntoIterator<Item = &'a String>,
    ) -> Result<Vec<String>, OrchestratorError> {
        let available: BTreeSet<&String> = available.into_iter().collect();
        match self {
            DimensionSelection::Keyword(k) if k.eq_ignore_ascii_case("all") => {
                Ok(available.into_iter().cloned().collect())
            }
            DimensionSelection::Keyword(k) => Err(OrchestratorError::Config(format!(
                "dimensions must be \"all\" or a list, got {k:?}"
            ))),
            DimensionSelection::List(list) => {
                let unknown: Vec<_> = list.iter().filter(|d| !available.contains(d)).cloned().collect();
                if !unknown.is_empty() {
                    return Err(OrchestratorError::Config(format!(
                        "dimensions not in the dataset: {}",
                        unknown.join(", ")
                    )));
                }
                let mut v = list.clone();
                v.sort();
                v.dedup();
                Ok(v)
            }
        }
    }
}

fn d_trials() -> usize {
    5
}
fn d_prf() -> usize {
    25
}
fn d_str() -> usize {
    3
}
fn d_budgets() -> Vec<usize> {
    (1..=10).collect()
}
fn d_output() -> PathBuf {
    PathBuf::from("out")
}
fn d_cache() -> Option<PathBuf> {
    Some(PathBuf::from("cache"))
}
fn d_dataset() -> PathBuf {
    PathBuf::from("data")
}
fn d_prior() -> [f64; 2] {
    [1.0, 1.0]
}
fn d_resolution() -> usize {
    DEFAULT_RESOLUTION
}
fn d_categories() -> Vec<String> {
    ONE_SHOT_CATEGORIES.iter().map(|s| s.to_string()).collect()
}

/// A full benchmark sweep, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "d_trials")]
    pub experiment_trials: usize,
    /// Profiling statements per valence in each trial's sample.
    #[serde(default = "d_prf")]
    pub profiling_per_direction: usize,
    #[serde(default = "d_str")]
    pub steering_trials: usize,
    #[serde(default = "d_budgets")]
    pub budgets: Vec<usize>,
    #[serde(default)]
    pub dimensions: DimensionSelection,
    #[serde(default)]
    pub backends: Vec<BackendConfig>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "d_output")]
    pub output_dir: PathBuf,
    #[serde(default = "d_cache")]
    pub cache_dir: Option<PathBuf>,
    /// Directory holding the prepared dataset bundle.
    #[serde(default = "d_dataset")]
    pub dataset_dir: PathBuf,
    #[serde(default = "d_prior")]
    pub prior: [f64; 2],
    #[serde(default = "d_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub average_mode: AverageMode,
    #[serde(default = "d_categories")]
    pub one_shot_categories: Vec<String>,
    /// Optional dimension catalog overriding the built-in categories.
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    /// Also write one profile per steering trial next to the pooled ones.
    #[serde(default)]
    pub per_steering_trial_profiles: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self =
            toml::from_str(&text).map_err(|e| OrchestratorError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn prior(&self) -> Result<Prior, OrchestratorError> {
        Prior::new(self.prior[0], self.prior[1]).map_err(|e| OrchestratorError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let err = |m: String| Err(OrchestratorError::Config(m));
        if self.experiment_trials == 0 || self.profiling_per_direction == 0 || self.steering_trials == 0 {
            return err("experiment_trials, profiling_per_direction and steering_trials must be >= 1".into());
        }
        if self.budgets.is_empty() || self.budgets[0] == 0 {
            return err("budgets must be a non-empty list of positive integers".into());
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return err(format!("budgets must be strictly increasing: {:?}", self.budgets));
        }
        if self.resolution == 0 {
            return err("resolution must be positive".into());
        }
        self.prior()?;
        let mut names = BTreeSet::new();
        for b in &self.backends {
            b.validate().map_err(|e| OrchestratorError::Config(e.to_string()))?;
            if !names.insert(b.model_name.as_str()) {
                return err(format!("duplicate model_name {:?}", b.model_name));
            }
            if b.model_name.contains(['/', '\\']) || b.model_name.starts_with('.') {
                return err(format!(
                    "model_name {:?} is not usable as a directory name",
                    b.model_name
                ));
            }
        }
        if let DimensionSelection::Keyword(k) = &self.dimensions {
            if !k.eq_ignore_ascii_case("all") {
                return err(format!("dimensions must be \"all\" or a list, got {k:?}"));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    /// Upper bound on backend calls per model:
    /// `T_e * dims * 2 n_prf * (1 + 2 |budgets| T_str)`.
    pub fn call_budget(&self, n_dimensions: usize) -> u64 {
        let per_profile = 2 * self.profiling_per_direction as u64;
        let profiles = 1 + 2 * self.budgets.len() as u64 * self.steering_trials as u64;
        self.experiment_trials as u64 * n_dimensions as u64 * per_profile * profiles
    }
}
