//! End-to-end acceptance criteria. Prints one `[PASS]`/`[FAIL]` line per
//! criterion and exits non-zero if any fails.

// `!(a <= b)` is deliberate: a NaN must fail a criterion
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use steerbench::backend::{Answer, AnswerRecord, BackendConfig, ChatTemplate, Context, SyntheticModelSpec, TrialIds};
use steerbench::metrics::{wasserstein, MarginalGrids, QuantileGrid};
use steerbench::orchestrator::{
    prepare_data, run_benchmark, DatasetBundle, ExperimentConfig, PrepareOptions, ResultBundle, RunControl,
};
use steerbench::persona::{Direction, FilterPolicy, ParseMode, PersonaStatement};
use steerbench::profile::{
    aggregate_trials, estimate_profile, maximally_steered, update_profile, BetaProfile, Prior, ProfileContext,
};
use steerbench::prompt::{prompt_with_steering, render_profiling_prompt, render_system_prompt};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const BASELINE: f64 = 0.7;
const SAT_POS: f64 = 0.95;
const SAT_NEG: f64 = 0.15;
const RATE: f64 = 0.5;

fn saturating_model() -> SyntheticModelSpec {
    logistic_model(17, BASELINE, SAT_POS, SAT_NEG, RATE)
}

/// The response curve written out independently of the backend.
fn expected_mean(direction: Direction, k: usize) -> f64 {
    let s = match direction {
        Direction::Positive => SAT_POS,
        Direction::Negative => SAT_NEG,
    };
    s + (BASELINE - s) * 2.0 / (1.0 + (RATE * k as f64).exp())
}

/// One dimension, 300 statements per direction, all at confidence 1.
fn saturating_dataset(root: &Path) -> Result<std::path::PathBuf, String> {
    let raw = root.join("raw");
    std::fs::create_dir_all(&raw).map_err(|e| e.to_string())?;
    write_uniform_dimension(&raw, "agreeableness", 300, 1.0);
    let data = root.join("data");
    let options = PrepareOptions {
        policy: FilterPolicy::default(),
        seed: 7,
        steering_per_direction: 100,
        parse_mode: ParseMode::Strict,
    };
    prepare_data(&raw, &options, Some(&data)).map_err(|e| e.to_string())?;
    Ok(data)
}

fn saturating_config(
    root: &Path,
    data: std::path::PathBuf,
    budgets: Vec<usize>,
    steering_trials: usize,
) -> ExperimentConfig {
    ExperimentConfig {
        experiment_trials: 10,
        profiling_per_direction: 200,
        steering_trials,
        budgets,
        backends: vec![BackendConfig::synthetic("saturating", saturating_model())],
        master_seed: 2024,
        output_dir: root.join("out"),
        cache_dir: None,
        dataset_dir: data,
        ..Default::default()
    }
}

fn run_one(cfg: &ExperimentConfig, control: &RunControl) -> Result<steerbench::orchestrator::ModelOutcome, String> {
    let out = run_benchmark(cfg, control).map_err(|e| e.to_string())?;
    out.models
        .into_iter()
        .next()
        .ok_or_else(|| "no model outcome".to_string())
}

fn mixture_mean(bundle: &ResultBundle, context: ProfileContext, k: Option<usize>) -> Result<f64, String> {
    let parts: Vec<_> = bundle
        .profiles
        .iter()
        .filter(|p| p.context == context && k.is_none_or(|k| p.k == k) && p.steering_trial.is_none())
        .map(|p| BetaProfile::new(p.alpha, p.beta))
        .collect();
    ensure!(
        parts.len() == bundle.experiment_trials,
        "{} profiles for {context} k={k:?}",
        parts.len()
    );
    Ok(aggregate_trials(&parts, None).map_err(|e| e.to_string())?.mean)
}

fn estimator_recovery() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = saturating_dataset(root.path())?;
    let cfg = saturating_config(root.path(), data, vec![1, 3, 5, 10], 1);
    let started = Instant::now();
    let outcome = run_one(&cfg, &RunControl::default())?;
    let elapsed = started.elapsed().as_secs_f64();
    let bundle = outcome.bundle.ok_or("run did not complete")?;

    let base = mixture_mean(&bundle, ProfileContext::Baseline, None)?;
    ensure!(
        (base - BASELINE).abs() <= 0.03,
        "baseline mean {base:.4}, expected {BASELINE} ± 0.03"
    );
    let mut worst = (base - BASELINE).abs();
    for direction in Direction::BOTH {
        for k in [1, 3, 5, 10] {
            let got = mixture_mean(&bundle, ProfileContext::Steered(direction), Some(k))?;
            let want = expected_mean(direction, k);
            ensure!(
                (got - want).abs() <= 0.03,
                "{direction} k={k}: mean {got:.4}, expected {want:.4} ± 0.03"
            );
            worst = worst.max((got - want).abs());
        }
    }
    ensure!(elapsed < 60.0, "runtime {elapsed:.1}s exceeds 60s");
    Ok(format!(
        "baseline {base:.4}, worst deviation {worst:.4}, runtime {elapsed:.1}s"
    ))
}

fn record(answer: Answer, valence: Direction, confidence: f64) -> AnswerRecord {
    AnswerRecord {
        answer,
        logprob_gap: if answer == Answer::Yes { 1.0 } else { -1.0 },
        valence,
        confidence,
        dimension: "d".into(),
        context: Context::Baseline,
        budget_k: 0,
        trial_ids: TrialIds {
            experiment: 0,
            steering: 0,
        },
        statement: "s".into(),
    }
}

fn grid(p: &BetaProfile) -> Result<QuantileGrid, String> {
    QuantileGrid::new(p, 2048).map_err(|e| e.to_string())
}

fn index_anchors() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let prior = Prior::default();
    let (mut quadruples, mut worst_bound, mut worst_zero, mut worst_full) = (0usize, 0f64, 0f64, 0f64);
    while quadruples < 10_000 {
        // a random paired profiling sample
        let n = rng.gen_range(3..=40);
        let sample: Vec<_> = Direction::BOTH
            .iter()
            .flat_map(|&d| (0..n).map(move |i| (d, i)))
            .map(|(d, i)| {
                let c = if rng.gen_bool(0.2) {
                    1.0
                } else {
                    rng.gen_range(0.55..=1.0)
                };
                PersonaStatement::new(format!("s{i}"), "d", d, c).unwrap()
            })
            .collect();
        let max_pos = maximally_steered(&sample, Direction::Positive, prior);
        let max_neg = maximally_steered(&sample, Direction::Negative, prior);
        // profiles the estimator can produce on this sample
        let mut profiles = vec![max_pos.clone(), max_neg.clone()];
        for _ in 0..4 {
            let p_yes: f64 = rng.gen();
            let rs: Vec<_> = sample
                .iter()
                .map(|s| {
                    let a = if rng.gen_bool(p_yes) { Answer::Yes } else { Answer::No };
                    record(a, s.direction(), s.label_confidence())
                })
                .collect();
            profiles.push(estimate_profile(&rs, prior).map_err(|e| e.to_string())?);
        }
        let grids = profiles.iter().map(grid).collect::<Result<Vec<_>, _>>()?;
        for (b, base) in profiles.iter().enumerate() {
            let marginals = MarginalGrids::from_grids(grids[b].clone(), grids[0].clone(), grids[1].clone())
                .map_err(|e| e.to_string())?;
            for direction in Direction::BOTH {
                let idx = |s: usize| {
                    marginals
                        .index_with_grid(&profiles[s], &grids[s], direction)
                        .map_err(|e| e.to_string())
                };
                for s in (0..profiles.len()).filter(|&s| s != b) {
                    let v = idx(s)?.value;
                    worst_bound = worst_bound.max(v.abs() - 1.0);
                    ensure!(
                        v.abs() <= 1.0 + 1e-9,
                        "|index| = {} for base {base:?}, steered {:?}",
                        v.abs(),
                        profiles[s]
                    );
                    quadruples += 1;
                }
                let zero = marginals
                    .index_with_grid(base, &grids[b], direction)
                    .map_err(|e| e.to_string())?;
                worst_zero = worst_zero.max(zero.value.abs());
                ensure!(zero.value.abs() <= 1e-9, "steered = base gives {}", zero.value);
                let target = if direction == Direction::Positive { 0 } else { 1 };
                let full = idx(target)?;
                let anchor = full.components.capacity / full.components.normalizer;
                worst_full = worst_full.max((full.value - anchor).abs());
                ensure!(
                    (full.value - anchor).abs() <= 1e-9,
                    "steered = marginal gives {} vs {anchor}",
                    full.value
                );
            }
        }
    }
    Ok(format!(
        "{quadruples} quadruples; max |index| - 1 = {worst_bound:.2e}, base anchor {worst_zero:.1e}, marginal anchor {worst_full:.1e}"
    ))
}

fn wasserstein_accuracy() -> Outcome {
    let w = wasserstein(&BetaProfile::new(2.0, 1.0), &BetaProfile::new(1.0, 2.0)).map_err(|e| e.to_string())?;
    ensure!((w - 1.0 / 3.0).abs() <= 1e-3, "W(Beta(2,1), Beta(1,2)) = {w}");

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut shape = || {
        // log-uniform over [0.5, 200]
        (rng.gen_range(0.5f64.ln()..200f64.ln())).exp()
    };
    let (mut asym, mut slack) = (0f64, f64::NEG_INFINITY);
    for _ in 0..1000 {
        let ps: Vec<_> = (0..3).map(|_| BetaProfile::new(shape(), shape())).collect();
        let g = ps.iter().map(grid).collect::<Result<Vec<_>, _>>()?;
        for x in &g {
            ensure!(x.distance(x) == 0.0, "non-zero self-distance");
        }
        let (pq, qp, qr, pr) = (
            g[0].distance(&g[1]),
            g[1].distance(&g[0]),
            g[1].distance(&g[2]),
            g[0].distance(&g[2]),
        );
        asym = asym.max((pq - qp).abs());
        slack = slack.max(pr - pq - qr);
        ensure!((pq - qp).abs() <= 1e-12, "asymmetry {}", (pq - qp).abs());
        ensure!(pr <= pq + qr + 1e-6, "triangle violated by {}", pr - pq - qr);
    }

    let mut drift = 0f64;
    for _ in 0..100 {
        let (p, q) = (BetaProfile::new(shape(), shape()), BetaProfile::new(shape(), shape()));
        let coarse = steerbench::metrics::wasserstein_with(&p, &q, 2048).map_err(|e| e.to_string())?;
        let fine = steerbench::metrics::wasserstein_with(&p, &q, 4096).map_err(|e| e.to_string())?;
        drift = drift.max((coarse - fine).abs());
    }
    ensure!(drift < 1e-4, "resolution-doubling drift {drift:.2e}");
    Ok(format!(
        "W = {w:.7}; 1000 triples: max asymmetry {asym:.1e}, max triangle excess {slack:.1e}; max drift {drift:.1e}"
    ))
}

fn update_law() -> Outcome {
    let p = BetaProfile::new(1.0, 1.0);
    for a in [Answer::Yes, Answer::No] {
        for d in Direction::BOTH {
            let q = update_profile(&p, a, d, 0.5).map_err(|e| e.to_string())?;
            ensure!(q.alpha == 1.0 && q.beta == 1.0, "c = 0.5 changed the profile to {q:?}");
        }
    }
    let q = update_profile(&p, Answer::Yes, Direction::Positive, 1.0).map_err(|e| e.to_string())?;
    ensure!(
        q.alpha == 2.0 && q.beta == 1.0,
        "(yes, +, 1) gave Beta({}, {})",
        q.alpha,
        q.beta
    );

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(0..200);
        let mut rs: Vec<_> = (0..n)
            .map(|_| {
                let a = if rng.gen() { Answer::Yes } else { Answer::No };
                let d = if rng.gen() {
                    Direction::Positive
                } else {
                    Direction::Negative
                };
                record(a, d, rng.gen_range(0.5..=1.0))
            })
            .collect();
        let before = estimate_profile(&rs, Prior::default()).map_err(|e| e.to_string())?;
        rs.shuffle(&mut rng);
        let after = estimate_profile(&rs, Prior::default()).map_err(|e| e.to_string())?;
        let diff = (before.alpha - after.alpha).abs().max((before.beta - after.beta).abs());
        worst = worst.max(diff);
        ensure!(diff <= 1e-12, "shuffled fold differs by {diff:e}");
    }
    Ok(format!(
        "1000 shuffled response sets, max parameter difference {worst:.1e}"
    ))
}

fn data_pipeline() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let names = write_full_corpus(root.path());
    let options = PrepareOptions {
        policy: FilterPolicy::default(),
        seed: 99,
        steering_per_direction: 100,
        parse_mode: ParseMode::Strict,
    };
    let prepare =
        |dir: &str| prepare_data(root.path(), &options, Some(&root.path().join(dir))).map_err(|e| e.to_string());
    let (a, b) = (prepare("a")?, prepare("b")?);

    // the corpus fixture documents which dimensions fail the policy
    let failing: BTreeSet<_> = (0..80).map(|i| format!("extra-dimension-{i:03}")).collect();
    let kept: BTreeSet<_> = a.dimensions.keys().cloned().collect();
    let expected: BTreeSet<_> = names.iter().filter(|n| !failing.contains(*n)).cloned().collect();
    ensure!(
        kept == expected,
        "kept {} dimensions, expected {}",
        kept.len(),
        expected.len()
    );

    for ds in a.dimensions.values() {
        for d in Direction::BOTH {
            ensure!(
                ds.steering(d).len() == 100 && ds.profiling(d).len() == 200,
                "{} {d}: {}/{} split",
                ds.dimension,
                ds.steering(d).len(),
                ds.profiling(d).len()
            );
            let st: BTreeSet<_> = ds.steering(d).iter().map(|s| s.text()).collect();
            ensure!(
                ds.profiling(d).iter().all(|s| !st.contains(s.text())),
                "{} {d}: steering and profiling overlap",
                ds.dimension
            );
        }
    }
    ensure!(a.digests() == b.digests(), "split digests differ between runs");
    let file = |dir: &str| file_digest(&DatasetBundle::dataset_path(&root.path().join(dir)));
    ensure!(file("a") == file("b"), "dataset files differ between runs");
    Ok(format!(
        "{} of {} dimensions kept, 100/200 disjoint splits, identical digests",
        kept.len(),
        names.len()
    ))
}

fn fixture(name: &str) -> Result<String, String> {
    let path = format!("{}/fixtures/prompts/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).map_err(|e| format!("{path}: {e}"))
}

fn prompt_goldens() -> Outcome {
    let steer = PersonaStatement::new(
        "I think it's important to be accepting of other people's ideas and opinions",
        "agreeableness",
        Direction::Positive,
        0.95,
    )
    .unwrap();
    let probe = PersonaStatement::new(
        "I often start arguments with people",
        "agreeableness",
        Direction::Negative,
        0.93,
    )
    .unwrap();
    let cases = [
        ("system_unsteered.txt", render_system_prompt(&[], true)),
        (
            "system_steered_k1.txt",
            render_system_prompt(std::slice::from_ref(&steer), true),
        ),
        ("user_profiling.txt", render_profiling_prompt(&probe)),
        (
            "llama3_unsteered.txt",
            ChatTemplate::Llama3.render(&prompt_with_steering(&[], &probe)),
        ),
        (
            "llama3_steered_k1.txt",
            ChatTemplate::Llama3.render(&prompt_with_steering(&[steer], &probe)),
        ),
    ];
    for (name, rendered) in &cases {
        ensure!(*rendered == fixture(name)?, "{name} differs from the rendered prompt");
    }
    Ok(format!("{} fixtures byte-identical", cases.len()))
}

fn plateau() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = saturating_dataset(root.path())?;
    let cfg = saturating_config(
        root.path(),
        data,
        (1..=10).collect(),
        ExperimentConfig::default().steering_trials,
    );
    let bundle = run_one(&cfg, &RunControl::default())?
        .bundle
        .ok_or("run did not complete")?;
    let curve = bundle
        .curves
        .iter()
        .find(|c| c.direction == Direction::Positive)
        .ok_or("no positive curve")?;
    let mut worst = f64::NEG_INFINITY;
    for w in curve.points.windows(2) {
        let drop = w[0].mean - w[1].mean;
        worst = worst.max(drop / w[0].std.max(w[1].std));
        ensure!(
            drop <= 2.0 * w[0].std.max(w[1].std),
            "k={} -> {}: mean drops {drop:.4} (stds {:.4}, {:.4})",
            w[0].k,
            w[1].k,
            w[0].std,
            w[1].std
        );
    }
    let at = |k| curve.at(k).map(|p| p.mean).ok_or(format!("no point at k={k}"));
    let gap = (at(8)? - at(10)?).abs();
    ensure!(gap < 0.05, "|mean(8) - mean(10)| = {gap:.4}");
    Ok(format!("largest drop {worst:.2} stds, |mean(8) - mean(10)| = {gap:.4}"))
}

fn resume_idempotence() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = prepare_small(root.path(), &["agreeableness", "politically-liberal"], 40, 10);
    let mut cfg = small_config(root.path(), data, "full", Some("cache-full"));
    cfg.backends = vec![BackendConfig::synthetic("saturating", saturating_model())];
    cfg.budgets = vec![1, 2, 4];
    cfg.experiment_trials = 3;
    let full = run_one(&cfg, &RunControl::default())?;

    cfg.output_dir = root.path().join("resumed");
    cfg.cache_dir = Some(root.path().join("cache-resumed"));
    let total = full.manifest.cells.len();
    let partial = run_one(
        &cfg,
        &RunControl {
            max_cells: Some(total / 2),
            cancel: None,
        },
    )?;
    ensure!(partial.bundle.is_none(), "interrupted run produced a bundle");
    ensure!(
        partial.manifest.completed() == total / 2,
        "{} of {total} cells done",
        partial.manifest.completed()
    );
    let resumed = run_one(&cfg, &RunControl::default())?;
    ensure!(resumed.bundle.is_some(), "resumed run did not complete");
    for rel in [
        "metrics/indices.json",
        "metrics/curves.json",
        "metrics/baseline.json",
        "profiles/profiles.json",
    ] {
        let (a, b) = (file_digest(&full.dir.join(rel)), file_digest(&resumed.dir.join(rel)));
        ensure!(a == b, "{rel} digest differs after resume");
    }
    Ok(format!(
        "interrupted after {} of {total} cells; metrics digests identical",
        total / 2
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("estimator recovery", estimator_recovery),
        ("index anchors", index_anchors),
        ("wasserstein accuracy", wasserstein_accuracy),
        ("belief-increment and update law", update_law),
        ("data pipeline", data_pipeline),
        ("prompt goldens", prompt_goldens),
        ("monotone-plateau curve shape", plateau),
        ("resume idempotence", resume_idempotence),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[PASS] {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
