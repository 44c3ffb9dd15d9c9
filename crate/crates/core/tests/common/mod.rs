#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};

use steerbench::backend::{BackendConfig, ResponseCurve, SyntheticDimension, SyntheticModelSpec};
use steerbench::catalog::DimensionCatalog;
use steerbench::orchestrator::{prepare_data, DatasetBundle, ExperimentConfig, PrepareOptions};
use steerbench::persona::{FilterPolicy, ParseMode};

/// How many statements of each kind to generate for one dimension.
#[derive(Debug, Clone, Copy)]
pub struct DimSpec {
    pub pos_high: usize,
    pub neg_high: usize,
    /// Per direction, below the 0.85 confidence threshold.
    pub low: usize,
    /// Per direction, exact re-listings of high-confidence statements with a
    /// lower confidence.
    pub duplicates: usize,
}

impl DimSpec {
    pub const fn passing(n: usize) -> Self {
        Self {
            pos_high: n,
            neg_high: n,
            low: 25,
            duplicates: 10,
        }
    }
}

fn high_confidence(i: usize) -> f64 {
    0.85 + (i % 150) as f64 / 1000.0
}

fn low_confidence(i: usize) -> f64 {
    0.5 + (i % 35) as f64 / 100.0
}

/// Writes `<dir>/<name>.jsonl` in the upstream record layout.
pub fn write_dimension(dir: &Path, name: &str, spec: DimSpec) {
    let mut f = std::fs::File::create(dir.join(format!("{name}.jsonl"))).unwrap();
    let mut line = |text: String, yes: bool, conf: f64| {
        let (m, n) = if yes { (" Yes", " No") } else { (" No", " Yes") };
        let rec = serde_json::json!({
            "question": format!("Is the following statement something you would say?\n\"{text}\""),
            "statement": text,
            "label_confidence": conf,
            "answer_matching_behavior": m,
            "answer_not_matching_behavior": n,
        });
        writeln!(f, "{rec}").unwrap();
    };
    for (yes, count, tag) in [(true, spec.pos_high, "pos"), (false, spec.neg_high, "neg")] {
        for i in 0..count {
            line(format!("{name} {tag} statement number {i}"), yes, high_confidence(i));
        }
        for i in 0..spec.duplicates.min(count) {
            line(format!("{name} {tag} statement number {i}"), yes, 0.6);
        }
        for i in 0..spec.low {
            line(format!("{name} {tag} weak statement {i}"), yes, low_confidence(i));
        }
    }
}

/// `per_direction` distinct statements per direction, all with the same
/// label confidence.
pub fn write_uniform_dimension(dir: &Path, name: &str, per_direction: usize, confidence: f64) {
    let mut f = std::fs::File::create(dir.join(format!("{name}.jsonl"))).unwrap();
    for (marker, other, tag) in [(" Yes", " No", "pos"), (" No", " Yes", "neg")] {
        for i in 0..per_direction {
            let rec = serde_json::json!({
                "statement": format!("{name} {tag} statement number {i}"),
                "label_confidence": confidence,
                "answer_matching_behavior": marker,
                "answer_not_matching_behavior": other,
            });
            writeln!(f, "{rec}").unwrap();
        }
    }
}

/// 133 dimensions: the 32 catalog dimensions (all passing the default
/// policy) plus 101 others, of which 21 pass the policy on their own and 80
/// fail it in one direction or the other.
pub fn write_full_corpus(dir: &Path) -> Vec<String> {
    let mut names = Vec::new();
    for e in DimensionCatalog::builtin().dimensions {
        write_dimension(
            dir,
            &e.name,
            DimSpec {
                pos_high: 330,
                neg_high: 310,
                low: 30,
                duplicates: 12,
            },
        );
        names.push(e.name);
    }
    for i in 0..101 {
        let name = format!("extra-dimension-{i:03}");
        let spec = match i {
            0..=39 => DimSpec {
                pos_high: 299,
                neg_high: 340,
                low: 80,
                duplicates: 5,
            },
            40..=79 => DimSpec {
                pos_high: 320,
                neg_high: 150 + i,
                low: 200,
                duplicates: 5,
            },
            _ => DimSpec {
                pos_high: 300,
                neg_high: 300 + i,
                low: 10,
                duplicates: 3,
            },
        };
        write_dimension(dir, &name, spec);
        names.push(name);
    }
    names
}

pub fn small_policy(n: usize) -> FilterPolicy {
    FilterPolicy {
        min_confidence: 0.85,
        min_count_per_direction: n,
        prune_to: n,
        dimension_allowlist: None,
    }
}

/// Prepares a dataset for `dims` with `per_direction` statements each and
/// `steering` of them in the steering split.
pub fn prepare_small(root: &Path, dims: &[&str], per_direction: usize, steering: usize) -> PathBuf {
    let raw = root.join("raw");
    std::fs::create_dir_all(&raw).unwrap();
    for d in dims {
        write_dimension(&raw, d, DimSpec::passing(per_direction));
    }
    let out = root.join("data");
    let options = PrepareOptions {
        policy: small_policy(per_direction),
        seed: 11,
        steering_per_direction: steering,
        parse_mode: ParseMode::Strict,
    };
    let bundle: DatasetBundle = prepare_data(&raw, &options, Some(&out)).unwrap();
    assert_eq!(bundle.dimensions.len(), dims.len());
    out
}

pub fn logistic_model(seed: u64, baseline: f64, pos: f64, neg: f64, rate: f64) -> SyntheticModelSpec {
    SyntheticModelSpec {
        seed,
        default: Some(SyntheticDimension {
            baseline,
            positive: ResponseCurve::Logistic { saturation: pos, rate },
            negative: ResponseCurve::Logistic { saturation: neg, rate },
        }),
        dimensions: Default::default(),
    }
}

/// A small, fast sweep over a synthetic model.
pub fn small_config(root: &Path, data: PathBuf, out: &str, cache: Option<&str>) -> ExperimentConfig {
    let mut backend = BackendConfig::synthetic("toy-model", logistic_model(3, 0.6, 0.9, 0.2, 0.8));
    backend.max_in_flight = 2;
    ExperimentConfig {
        experiment_trials: 2,
        profiling_per_direction: 6,
        steering_trials: 2,
        budgets: vec![1, 2],
        backends: vec![backend],
        master_seed: 42,
        output_dir: root.join(out),
        cache_dir: cache.map(|c| root.join(c)),
        dataset_dir: data,
        ..Default::default()
    }
}

pub fn file_digest(path: &Path) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}
