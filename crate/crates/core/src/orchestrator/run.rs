use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::manifest::{CellKey, CellStatus, ModelStatus, RunManifest};
use super::prepare::DatasetBundle;
use super::{read_json, write_atomic, write_json, ExperimentConfig, OrchestratorError, SCHEMA_VERSION};
use crate::backend::{AnswerRecord, BackendError, Context, Coordinates, ScoreRequest, Scorer, TrialIds};
use crate::catalog::DimensionCatalog;
use crate::metrics::{
    baseline_summary, build_curve, curves_csv, one_shot_summary, BaselineRow, MarginalGrids, OneShotTable,
    SteerabilityCurve, SteerabilityIndex,
};
use crate::persona::{DimensionDataset, Direction, PersonaStatement};
use crate::profile::{
    aggregate_trials, estimate_profile, maximally_steered, BetaProfile, Prior, ProfileContext, Provenance,
};
use crate::prompt::{prompt_with_steering, sample_profiling_statements, sample_steering_statements, SteeringSpec};
use crate::seed::SeedPath;

/// External stop conditions, checked between cells.
#[derive(Debug, Clone, Default)]
pub struct RunControl {
    /// Stop once this many cells have been processed in this invocation.
    pub max_cells: Option<usize>,
    pub cancel: Option<Arc<AtomicBool>>,
}

impl RunControl {
    fn should_stop(&self, processed: usize) -> bool {
        self.max_cells.is_some_and(|m| processed >= m)
            || self.cancel.as_ref().is_some_and(|c| c.load(Ordering::Relaxed))
    }
}

/// Flat, serializable form of a profile with its coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub dimension: String,
    pub context: ProfileContext,
    pub k: usize,
    pub trial: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steering_trial: Option<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub n_updates: usize,
    pub mean: f64,
    pub std: f64,
}

impl ProfileRecord {
    fn new(p: &BetaProfile, steering_trial: Option<usize>) -> Self {
        let prov = p.provenance.as_ref().expect("run profiles carry provenance");
        Self {
            dimension: prov.dimension.clone(),
            context: prov.context,
            k: prov.budget_k,
            trial: prov.trial,
            steering_trial,
            alpha: p.alpha,
            beta: p.beta,
            n_updates: p.n_updates,
            mean: p.mean(),
            std: p.std(),
        }
    }

    pub fn profile(&self) -> BetaProfile {
        BetaProfile {
            alpha: self.alpha,
            beta: self.beta,
            n_updates: self.n_updates,
            provenance: Some(Provenance {
                dimension: self.dimension.clone(),
                context: self.context,
                budget_k: self.k,
                trial: self.trial,
            }),
        }
    }
}

/// Everything a completed sweep produced for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub model: String,
    pub budgets: Vec<usize>,
    pub experiment_trials: usize,
    pub profiles: Vec<ProfileRecord>,
    pub indices: Vec<SteerabilityIndex>,
    pub curves: Vec<SteerabilityCurve>,
    pub baseline: Vec<BaselineRow>,
    pub one_shot: Option<OneShotTable>,
}

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    schema_version: u32,
    model: String,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize, Deserialize)]
struct ProfilesFile {
    profiles: Vec<ProfileRecord>,
}

#[derive(Serialize, Deserialize)]
struct IndicesFile {
    indices: Vec<SteerabilityIndex>,
}

#[derive(Serialize, Deserialize)]
struct CurvesFile {
    budgets: Vec<usize>,
    experiment_trials: usize,
    curves: Vec<SteerabilityCurve>,
}

#[derive(Serialize, Deserialize)]
struct BaselineFile {
    rows: Vec<BaselineRow>,
}

#[derive(Serialize, Deserialize)]
struct OneShotFile {
    table: OneShotTable,
}

#[derive(Serialize)]
struct ResponsesFile<'a> {
    dimension: &'a str,
    records: &'a [AnswerRecord],
}

#[derive(Serialize)]
struct SampleEntry<'a> {
    dimension: &'a str,
    trial: usize,
    statements: &'a [PersonaStatement],
}

#[derive(Serialize)]
struct SamplesFile<'a> {
    samples: Vec<SampleEntry<'a>>,
}

#[derive(Serialize)]
struct SplitsFile<'a> {
    dataset_seed: u64,
    steering_per_direction: usize,
    digests: &'a BTreeMap<String, String>,
}

impl ResultBundle {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("bundle serializes")))
    }

    fn versioned<T>(&self, body: T) -> Versioned<T> {
        Versioned {
            schema_version: SCHEMA_VERSION,
            model: self.model.clone(),
            body,
        }
    }

    /// Writes `profiles/` and `metrics/` under `model_dir`.
    pub fn write(&self, model_dir: &Path) -> Result<(), OrchestratorError> {
        let metrics = model_dir.join("metrics");
        write_json(
            &model_dir.join("profiles").join("profiles.json"),
            &self.versioned(ProfilesFile {
                profiles: self.profiles.clone(),
            }),
        )?;
        write_json(
            &metrics.join("indices.json"),
            &self.versioned(IndicesFile {
                indices: self.indices.clone(),
            }),
        )?;
        write_json(
            &metrics.join("curves.json"),
            &self.versioned(CurvesFile {
                budgets: self.budgets.clone(),
                experiment_trials: self.experiment_trials,
                curves: self.curves.clone(),
            }),
        )?;
        write_atomic(&metrics.join("curves.csv"), curves_csv(&self.curves)?.as_bytes())?;
        write_json(
            &metrics.join("baseline.json"),
            &self.versioned(BaselineFile {
                rows: self.baseline.clone(),
            }),
        )?;
        let one_shot = metrics.join("one_shot.json");
        match &self.one_shot {
            Some(t) => write_json(&one_shot, &self.versioned(OneShotFile { table: t.clone() }))?,
            None if one_shot.exists() => std::fs::remove_file(one_shot)?,
            None => {}
        }
        Ok(())
    }

    /// Reads back what [`ResultBundle::write`] produced.
    pub fn read(model_dir: &Path) -> Result<Self, OrchestratorError> {
        let metrics = model_dir.join("metrics");
        let profiles: Versioned<ProfilesFile> = read_json(&model_dir.join("profiles").join("profiles.json"))?;
        let indices: Versioned<IndicesFile> = read_json(&metrics.join("indices.json"))?;
        let curves: Versioned<CurvesFile> = read_json(&metrics.join("curves.json"))?;
        let baseline: Versioned<BaselineFile> = read_json(&metrics.join("baseline.json"))?;
        let one_shot_path = metrics.join("one_shot.json");
        let one_shot = if one_shot_path.exists() {
            Some(read_json::<Versioned<OneShotFile>>(&one_shot_path)?.body.table)
        } else {
            None
        };
        Ok(Self {
            model: curves.model,
            budgets: curves.body.budgets,
            experiment_trials: curves.body.experiment_trials,
            profiles: profiles.body.profiles,
            indices: indices.body.indices,
            curves: curves.body.curves,
            baseline: baseline.body.rows,
            one_shot,
        })
    }
}

#[derive(Debug)]
pub struct ModelOutcome {
    pub model: String,
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub bundle: Option<ResultBundle>,
}

impl ModelOutcome {
    pub fn status(&self) -> &ModelStatus {
        &self.manifest.status
    }
}

#[derive(Debug, Default)]
pub struct RunOutcome {
    pub models: Vec<ModelOutcome>,
}

impl RunOutcome {
    pub fn is_complete(&self) -> bool {
        self.models.iter().all(|m| m.manifest.status == ModelStatus::Complete)
    }
}

/// Runs (or resumes) the sweep for every configured backend.
///
/// A model whose backend fails fatally is aborted with its partial progress
/// recorded; the remaining models still run.
pub fn run_benchmark(config: &ExperimentConfig, control: &RunControl) -> Result<RunOutcome, OrchestratorError> {
    config.validate()?;
    if config.backends.is_empty() {
        return Err(OrchestratorError::Config("no backends configured".into()));
    }
    let dataset = DatasetBundle::load(&config.dataset_dir)?;
    let dims = config.dimensions.resolve(dataset.dimensions.keys())?;
    if dims.is_empty() {
        return Err(OrchestratorError::Config("no dimensions selected".into()));
    }
    let max_k = *config.budgets.last().expect("validated non-empty");
    for d in &dims {
        let ds = &dataset.dimensions[d];
        for dir in Direction::BOTH {
            if max_k > ds.steering(dir).len() {
                return Err(OrchestratorError::Config(format!(
                    "budget {max_k} exceeds the {dir} steering split of {d} ({} statements)",
                    ds.steering(dir).len()
                )));
            }
            if config.profiling_per_direction > ds.profiling(dir).len() {
                return Err(OrchestratorError::Config(format!(
                    "profiling_per_direction {} exceeds the {dir} profiling split of {d} ({} statements)",
                    config.profiling_per_direction,
                    ds.profiling(dir).len()
                )));
            }
        }
    }
    let catalog = match &config.catalog {
        Some(p) => DimensionCatalog::load(p)?,
        None => DimensionCatalog::builtin(),
    };
    let ctx = SweepContext {
        config,
        prior: config.prior()?,
        dataset: &dataset,
        dims: &dims,
        catalog: &catalog,
        control,
    };

    let mut outcome = RunOutcome::default();
    let mut processed = 0usize;
    for backend in &config.backends {
        let model_dir = config.output_dir.join(&backend.model_name);
        let scorer = match Scorer::from_config(backend, config.cache_dir.clone()) {
            Ok(s) => s,
            Err(e) => {
                log::error!("{}: {e}", backend.model_name);
                let mut manifest = RunManifest::new(&backend.model_name, config.digest(), BTreeMap::new());
                manifest.status = ModelStatus::Aborted(e.to_string());
                manifest.save(&model_dir)?;
                outcome.models.push(ModelOutcome {
                    model: backend.model_name.clone(),
                    dir: model_dir,
                    manifest,
                    bundle: None,
                });
                continue;
            }
        };
        let m = ctx.run_model(&scorer, &model_dir, &mut processed)?;
        outcome.models.push(m);
    }
    Ok(outcome)
}

struct SweepContext<'a> {
    config: &'a ExperimentConfig,
    prior: Prior,
    dataset: &'a DatasetBundle,
    dims: &'a [String],
    catalog: &'a DimensionCatalog,
    control: &'a RunControl,
}

/// Why a dimension (or the whole model) stopped.
enum Halt {
    Interrupted,
    Fatal(String),
    Dimension(String),
}

impl From<BackendError> for Halt {
    fn from(e: BackendError) -> Self {
        if e.is_fatal() {
            Halt::Fatal(e.to_string())
        } else {
            Halt::Dimension(e.to_string())
        }
    }
}

macro_rules! dim_err {
    ($e:expr) => {
        $e.map_err(|e| Halt::Dimension(e.to_string()))?
    };
}

#[derive(Default)]
struct DimensionResult {
    profiles: Vec<ProfileRecord>,
    indices: Vec<SteerabilityIndex>,
    baselines: Vec<BetaProfile>,
}

impl SweepContext<'_> {
    fn seed(&self, purpose: &str, model: &str, dimension: &str) -> SeedPath {
        SeedPath::new(self.config.master_seed, purpose)
            .with(model)
            .with(dimension)
    }

    fn cells_for(&self, dimension: &str) -> Vec<(CellKey, usize)> {
        let c = self.config;
        let n = 2 * c.profiling_per_direction;
        let mut cells = Vec::new();
        for trial in 0..c.experiment_trials {
            cells.push((
                CellKey {
                    dimension: dimension.into(),
                    context: Context::Baseline,
                    budget_k: 0,
                    trial,
                },
                n,
            ));
            for dir in Direction::BOTH {
                for &k in &c.budgets {
                    cells.push((
                        CellKey {
                            dimension: dimension.into(),
                            context: Context::Steered(dir),
                            budget_k: k,
                            trial,
                        },
                        n * c.steering_trials,
                    ));
                }
            }
        }
        cells
    }

    fn run_model(
        &self,
        scorer: &Scorer,
        model_dir: &Path,
        processed: &mut usize,
    ) -> Result<ModelOutcome, OrchestratorError> {
        let model = scorer.model_name().to_owned();
        let config_digest = self.config.digest();
        let digests: BTreeMap<String, String> = self
            .dims
            .iter()
            .map(|d| (d.clone(), self.dataset.dimensions[d].digest()))
            .collect();
        let mut manifest = match RunManifest::load(model_dir) {
            Ok(m) if m.config_digest == config_digest && m.dataset_digests == digests => {
                log::info!("{model}: resuming ({} cells already complete)", m.completed());
                m
            }
            _ => RunManifest::new(&model, config_digest, digests.clone()),
        };
        manifest.status = ModelStatus::Running;
        manifest.failed_dimensions.clear();
        manifest.call_budget = self.config.call_budget(self.dims.len());
        manifest.budgets = self.config.budgets.clone();
        manifest.experiment_trials = self.config.experiment_trials;
        for d in self.dims {
            for (key, n) in self.cells_for(d) {
                manifest.register(&key, n);
            }
        }
        manifest.save(model_dir)?;
        write_json(
            &model_dir.join("data").join("splits.json"),
            &Versioned {
                schema_version: SCHEMA_VERSION,
                model: model.clone(),
                body: SplitsFile {
                    dataset_seed: self.dataset.seed,
                    steering_per_direction: self.dataset.steering_per_direction,
                    digests: &digests,
                },
            },
        )?;

        let (calls0, hits0) = (manifest.backend_calls, manifest.cache_hits);
        let sync_counts = |m: &mut RunManifest| {
            m.backend_calls = calls0 + scorer.backend_calls();
            m.cache_hits = hits0 + scorer.cache_hits();
        };

        let mut results: BTreeMap<String, DimensionResult> = BTreeMap::new();
        for dimension in self.dims {
            match self.run_dimension(scorer, &model, dimension, model_dir, &mut manifest, processed) {
                Ok(r) => {
                    results.insert(dimension.clone(), r);
                }
                Err(Halt::Dimension(msg)) => {
                    log::warn!("{model}: dimension {dimension} failed: {msg}");
                    for (key, _) in self.cells_for(dimension) {
                        if manifest.cells[&key.to_string()].status != CellStatus::Complete {
                            manifest.set_status(&key, CellStatus::Failed);
                        }
                    }
                    manifest.failed_dimensions.insert(dimension.clone(), msg);
                }
                Err(halt) => {
                    manifest.status = match halt {
                        Halt::Interrupted => {
                            log::info!("{model}: interrupted after {} cells", manifest.completed());
                            ModelStatus::Interrupted
                        }
                        Halt::Fatal(msg) => {
                            log::error!("{model}: aborting sweep: {msg}");
                            ModelStatus::Aborted(msg)
                        }
                        Halt::Dimension(_) => unreachable!(),
                    };
                    sync_counts(&mut manifest);
                    manifest.save(model_dir)?;
                    return Ok(ModelOutcome {
                        model,
                        dir: model_dir.to_path_buf(),
                        manifest,
                        bundle: None,
                    });
                }
            }
            sync_counts(&mut manifest);
            manifest.save(model_dir)?;
        }

        let bundle = self.assemble(&model, results)?;
        bundle.write(model_dir)?;
        super::report::report(model_dir, &bundle, &super::ReportFormat::ALL)?;
        manifest.status = ModelStatus::Complete;
        sync_counts(&mut manifest);
        manifest.save(model_dir)?;
        if manifest.backend_calls > manifest.call_budget {
            log::warn!(
                "{model}: {} backend calls exceed the budget of {}",
                manifest.backend_calls,
                manifest.call_budget
            );
        }
        Ok(ModelOutcome {
            model,
            dir: model_dir.to_path_buf(),
            manifest,
            bundle: Some(bundle),
        })
    }

    fn score_cell(
        &self,
        scorer: &Scorer,
        key: &CellKey,
        requests: &[ScoreRequest],
        manifest: &mut RunManifest,
        processed: &mut usize,
    ) -> Result<Vec<AnswerRecord>, Halt> {
        if self.control.should_stop(*processed) {
            return Err(Halt::Interrupted);
        }
        let mut records = Vec::with_capacity(requests.len());
        let mut first_err: Option<BackendError> = None;
        for r in scorer.score_batch(requests) {
            match r {
                Ok(rec) => records.push(rec),
                Err(e) if e.is_fatal() => return Err(e.into()),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        if let Some(e) = first_err {
            return Err(e.into());
        }
        manifest.set_status(key, CellStatus::Complete);
        *processed += 1;
        Ok(records)
    }

    fn run_dimension(
        &self,
        scorer: &Scorer,
        model: &str,
        dimension: &str,
        model_dir: &Path,
        manifest: &mut RunManifest,
        processed: &mut usize,
    ) -> Result<DimensionResult, Halt> {
        let c = self.config;
        let ds: &DimensionDataset = &self.dataset.dimensions[dimension];
        let mut out = DimensionResult::default();
        let mut responses: Vec<AnswerRecord> = Vec::new();
        let mut samples: Vec<(usize, Vec<PersonaStatement>)> = Vec::new();
        let provenance = |context, budget_k, trial| Provenance {
            dimension: dimension.to_owned(),
            context,
            budget_k,
            trial,
        };

        for trial in 0..c.experiment_trials {
            let sample_seed = self
                .seed("profiling-sample", model, dimension)
                .with_int(trial as u64)
                .seed();
            let sample = dim_err!(sample_profiling_statements(ds, c.profiling_per_direction, sample_seed));

            let base_key = CellKey {
                dimension: dimension.into(),
                context: Context::Baseline,
                budget_k: 0,
                trial,
            };
            let requests: Vec<ScoreRequest> = sample
                .iter()
                .map(|s| ScoreRequest {
                    prompt: prompt_with_steering(&[], s),
                    coords: Coordinates {
                        dimension: dimension.into(),
                        context: Context::Baseline,
                        budget_k: 0,
                        trial_ids: TrialIds {
                            experiment: trial,
                            steering: 0,
                        },
                    },
                })
                .collect();
            let base_records = self.score_cell(scorer, &base_key, &requests, manifest, processed)?;
            let base = dim_err!(estimate_profile(&base_records, self.prior)).with_provenance(provenance(
                ProfileContext::Baseline,
                0,
                trial,
            ));
            responses.extend(base_records);

            let max_pos = maximally_steered(&sample, Direction::Positive, self.prior).with_provenance(provenance(
                ProfileContext::MaxSteered(Direction::Positive),
                0,
                trial,
            ));
            let max_neg = maximally_steered(&sample, Direction::Negative, self.prior).with_provenance(provenance(
                ProfileContext::MaxSteered(Direction::Negative),
                0,
                trial,
            ));
            let grids = dim_err!(MarginalGrids::new(&base, &max_pos, &max_neg, c.resolution));
            out.profiles.push(ProfileRecord::new(&base, None));
            out.profiles.push(ProfileRecord::new(&max_pos, None));
            out.profiles.push(ProfileRecord::new(&max_neg, None));
            out.baselines.push(base);

            for dir in Direction::BOTH {
                for &k in &c.budgets {
                    let key = CellKey {
                        dimension: dimension.into(),
                        context: Context::Steered(dir),
                        budget_k: k,
                        trial,
                    };
                    let spec = SteeringSpec {
                        dimension: dimension.into(),
                        direction: dir,
                        budget_k: k,
                    };
                    let mut requests = Vec::with_capacity(sample.len() * c.steering_trials);
                    for st in 0..c.steering_trials {
                        let seed = self
                            .seed("steering-sample", model, dimension)
                            .with(dir.as_str())
                            .with_int(k as u64)
                            .with_int(trial as u64)
                            .with_int(st as u64)
                            .seed();
                        let steering = dim_err!(sample_steering_statements(ds, &spec, seed));
                        requests.extend(sample.iter().map(|s| ScoreRequest {
                            prompt: prompt_with_steering(&steering, s),
                            coords: Coordinates {
                                dimension: dimension.into(),
                                context: Context::Steered(dir),
                                budget_k: k,
                                trial_ids: TrialIds {
                                    experiment: trial,
                                    steering: st,
                                },
                            },
                        }));
                    }
                    let records = self.score_cell(scorer, &key, &requests, manifest, processed)?;
                    // steering trials pool into one profile per experiment trial
                    let steered = dim_err!(estimate_profile(&records, self.prior)).with_provenance(provenance(
                        ProfileContext::Steered(dir),
                        k,
                        trial,
                    ));
                    out.indices.push(dim_err!(grids.index(&steered, dir)));
                    out.profiles.push(ProfileRecord::new(&steered, None));
                    if c.per_steering_trial_profiles {
                        for st in 0..c.steering_trials {
                            let p = dim_err!(estimate_profile(
                                records.iter().filter(|r| r.trial_ids.steering == st),
                                self.prior
                            ))
                            .with_provenance(provenance(
                                ProfileContext::Steered(dir),
                                k,
                                trial,
                            ));
                            out.profiles.push(ProfileRecord::new(&p, Some(st)));
                        }
                    }
                    responses.extend(records);
                }
            }
            samples.push((trial, sample));
        }

        let io = |e: OrchestratorError| Halt::Fatal(e.to_string());
        write_json(
            &model_dir.join("responses").join(format!("{dimension}.json")),
            &Versioned {
                schema_version: SCHEMA_VERSION,
                model: model.to_owned(),
                body: ResponsesFile {
                    dimension,
                    records: &responses,
                },
            },
        )
        .map_err(io)?;
        let sample_entries = SamplesFile {
            samples: samples
                .iter()
                .map(|(trial, s)| SampleEntry {
                    dimension,
                    trial: *trial,
                    statements: s,
                })
                .collect(),
        };
        write_json(
            &model_dir
                .join("data")
                .join("profiling_samples")
                .join(format!("{dimension}.json")),
            &Versioned {
                schema_version: SCHEMA_VERSION,
                model: model.to_owned(),
                body: sample_entries,
            },
        )
        .map_err(io)?;
        Ok(out)
    }

    fn assemble(
        &self,
        model: &str,
        results: BTreeMap<String, DimensionResult>,
    ) -> Result<ResultBundle, OrchestratorError> {
        let c = self.config;
        let mut profiles = Vec::new();
        let mut indices = Vec::new();
        let mut curves = Vec::new();
        let mut aggregates = BTreeMap::new();
        for (dimension, r) in results {
            for dir in Direction::BOTH {
                curves.push(build_curve(
                    &dimension,
                    dir,
                    &r.indices,
                    &c.budgets,
                    c.experiment_trials,
                    false,
                )?);
            }
            aggregates.insert(dimension, aggregate_trials(&r.baselines, None)?);
            profiles.extend(r.profiles);
            indices.extend(r.indices);
        }
        let one_shot = if c.budgets.contains(&1) && !curves.is_empty() {
            let categories: Vec<&str> = c.one_shot_categories.iter().map(String::as_str).collect();
            Some(one_shot_summary(
                &curves,
                &self.catalog.category_map(),
                Some(&categories),
                c.average_mode,
            )?)
        } else {
            None
        };
        Ok(ResultBundle {
            model: model.to_owned(),
            budgets: c.budgets.clone(),
            experiment_trials: c.experiment_trials,
            profiles,
            indices,
            curves,
            baseline: baseline_summary(&aggregates),
            one_shot,
        })
    }
}
