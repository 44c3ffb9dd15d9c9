use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use steerbench::backend::{BackendConfig, BackendKind, ResponseCurve, SyntheticDimension, SyntheticModelSpec};
use steerbench::catalog::DimensionCatalog;
use steerbench::orchestrator::{
    curves_only, load_bundle, prepare_data, report, run_benchmark, write_combined_one_shot, DimensionSelection,
    ExperimentConfig, ModelStatus, PrepareOptions, ReportFormat, RunControl, DEFAULT_STEERING_PER_DIRECTION,
};
use steerbench::persona::{FilterPolicy, ParseMode};

#[derive(Parser)]
#[command(
    name = "steerbench",
    version,
    about = "Prompt-steerability benchmark for chat models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter and split raw persona records into a dataset bundle.
    PrepareData(PrepareArgs),
    /// Run (or resume) a benchmark sweep.
    Run(RunArgs),
    /// Regenerate report tables and plots from completed runs.
    Report(ReportArgs),
    /// Write steerability curve plots and CSV only.
    Curves(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendChoice {
    Http,
    Synthetic,
    Replay,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Restrict to these models (repeatable).
    #[arg(long = "model")]
    models: Vec<String>,
    /// Comma-separated dimension names, or "all".
    #[arg(long)]
    dims: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PrepareArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of upstream `<dimension>.jsonl` files.
    #[arg(long)]
    raw: PathBuf,
    /// Abort on the first malformed record instead of skipping it.
    #[arg(long)]
    strict_parse: bool,
    #[arg(long, default_value_t = 0.85)]
    min_confidence: f64,
    #[arg(long, default_value_t = 300)]
    min_count: usize,
    #[arg(long, default_value_t = 300)]
    prune_to: usize,
    #[arg(long, default_value_t = DEFAULT_STEERING_PER_DIRECTION)]
    steering_per_direction: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated steering budgets.
    #[arg(long)]
    budgets: Option<String>,
    /// Number of experiment trials.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Override the backend kind of every selected model.
    #[arg(long, value_enum)]
    backend: Option<BackendChoice>,
    /// Prepared dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Stop after this many cells (the run can be resumed later).
    #[arg(long)]
    max_cells: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// Report formats: baseline, curves, one-shot (repeatable; default all,
    /// "none" for manifest only).
    #[arg(long = "format")]
    formats: Vec<String>,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().with_context(|| format!("bad integer {p:?}")))
        .collect()
}

fn default_synthetic() -> SyntheticModelSpec {
    SyntheticModelSpec {
        seed: 0,
        default: Some(SyntheticDimension {
            baseline: 0.5,
            positive: ResponseCurve::Logistic {
                saturation: 0.9,
                rate: 0.6,
            },
            negative: ResponseCurve::Logistic {
                saturation: 0.1,
                rate: 0.6,
            },
        }),
        dimensions: Default::default(),
    }
}

fn apply_common(cfg: &mut ExperimentConfig, common: &Common) {
    if let Some(d) = &common.dims {
        cfg.dimensions = DimensionSelection::parse_csv(d);
    }
    if let Some(s) = common.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
}

fn select_backends(cfg: &mut ExperimentConfig, models: &[String], choice: Option<BackendChoice>) -> Result<()> {
    if !models.is_empty() {
        let mut selected = Vec::new();
        for name in models {
            match cfg.backends.iter().find(|b| &b.model_name == name) {
                Some(b) => selected.push(b.clone()),
                None if matches!(choice, Some(BackendChoice::Synthetic)) => {
                    selected.push(BackendConfig::synthetic(name, default_synthetic()))
                }
                None => bail!("model {name:?} is not configured"),
            }
        }
        cfg.backends = selected;
    }
    match choice {
        None => {}
        Some(BackendChoice::Replay) => {
            for b in &mut cfg.backends {
                b.coordinate_keyed |= b.kind == BackendKind::Synthetic;
                b.kind = BackendKind::Replay;
            }
        }
        Some(BackendChoice::Synthetic) => {
            if cfg.backends.is_empty() {
                cfg.backends
                    .push(BackendConfig::synthetic("synthetic", default_synthetic()));
            }
            for b in &mut cfg.backends {
                b.kind = BackendKind::Synthetic;
                b.synthetic.get_or_insert_with(default_synthetic);
            }
        }
        Some(BackendChoice::Http) => {
            for b in &mut cfg.backends {
                b.kind = BackendKind::HttpChat;
            }
        }
    }
    Ok(())
}

fn cmd_prepare(args: PrepareArgs) -> Result<ExitCode> {
    let mut cfg = load_config(args.common.config.as_deref())?;
    apply_common(&mut cfg, &args.common);
    let allowlist = match &args.common.dims {
        Some(d) if d.trim().eq_ignore_ascii_case("all") => None,
        Some(d) => Some(
            d.split(',')
                .map(|s| s.trim().to_owned())
                .filter(|s| !s.is_empty())
                .collect(),
        ),
        None => Some(DimensionCatalog::builtin().allowlist()),
    };
    let options = PrepareOptions {
        policy: FilterPolicy {
            min_confidence: args.min_confidence,
            min_count_per_direction: args.min_count,
            prune_to: args.prune_to,
            dimension_allowlist: allowlist,
        },
        seed: cfg.master_seed,
        steering_per_direction: args.steering_per_direction,
        parse_mode: if args.strict_parse {
            ParseMode::Strict
        } else {
            ParseMode::Lenient
        },
    };
    let out = args.common.out.clone().unwrap_or_else(|| cfg.dataset_dir.clone());
    let bundle = prepare_data(&args.raw, &options, Some(&out))?;
    println!("{} dimensions written to {}", bundle.dimensions.len(), out.display());
    for (name, why) in &bundle.skipped {
        println!("skipped {name}: {why}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let mut cfg = load_config(args.common.config.as_deref())?;
    apply_common(&mut cfg, &args.common);
    if let Some(b) = &args.budgets {
        cfg.budgets = parse_list(b)?;
    }
    if let Some(t) = args.trials {
        cfg.experiment_trials = t;
    }
    if let Some(c) = &args.cache_dir {
        cfg.cache_dir = Some(c.clone());
    }
    if let Some(d) = &args.data {
        cfg.dataset_dir = d.clone();
    }
    select_backends(&mut cfg, &args.common.models, args.backend)?;
    cfg.validate()?;
    let control = RunControl {
        max_cells: args.max_cells,
        cancel: None,
    };
    let outcome = run_benchmark(&cfg, &control)?;
    let mut ok = true;
    for m in &outcome.models {
        let man = &m.manifest;
        println!(
            "{}: {:?} ({} / {} cells, {} backend calls, {} cache hits, call budget {})",
            m.model,
            man.status,
            man.completed(),
            man.cells.len(),
            man.backend_calls,
            man.cache_hits,
            man.call_budget
        );
        for (dim, why) in &man.failed_dimensions {
            println!("  skipped {dim}: {why}");
        }
        ok &= man.status == ModelStatus::Complete;
    }
    let bundles: Vec<_> = outcome.models.iter().filter_map(|m| m.bundle.clone()).collect();
    write_combined_one_shot(&cfg.output_dir, &bundles)?;
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn model_dirs(cfg: &ExperimentConfig, models: &[String]) -> Result<Vec<PathBuf>> {
    if !models.is_empty() {
        return Ok(models.iter().map(|m| cfg.output_dir.join(m)).collect());
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&cfg.output_dir)
        .with_context(|| format!("reading {}", cfg.output_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("manifest.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!("no model runs under {}", cfg.output_dir.display());
    }
    Ok(dirs)
}

fn cmd_report(args: ReportArgs, curves: bool) -> Result<ExitCode> {
    let mut cfg = load_config(args.common.config.as_deref())?;
    apply_common(&mut cfg, &args.common);
    let formats: Vec<ReportFormat> = if args.formats.is_empty() {
        ReportFormat::ALL.to_vec()
    } else if args.formats.iter().any(|f| f == "none") {
        Vec::new()
    } else {
        args.formats
            .iter()
            .map(|f| f.parse().map_err(anyhow::Error::msg))
            .collect::<Result<_>>()?
    };
    let dims: Option<Vec<String>> = args
        .common
        .dims
        .as_deref()
        .filter(|d| !d.trim().eq_ignore_ascii_case("all"))
        .map(|d| d.split(',').map(|s| s.trim().to_owned()).collect());

    let mut failed = false;
    let mut bundles = Vec::new();
    for dir in model_dirs(&cfg, &args.common.models)? {
        match load_bundle(&dir) {
            Ok(bundle) => {
                if curves {
                    for f in curves_only(&dir, &bundle, dims.as_deref())? {
                        println!("{}", dir.join(f).display());
                    }
                } else {
                    let m = report(&dir, &bundle, &formats)?;
                    for f in m
                        .files
                        .iter()
                        .chain(std::iter::once(&"report/report_manifest.json".to_owned()))
                    {
                        println!("{}", dir.join(f).display());
                    }
                }
                bundles.push(bundle);
            }
            Err(e) => {
                eprintln!("error: {}: {e}", dir.display());
                failed = true;
            }
        }
    }
    if !curves && formats.contains(&ReportFormat::OneShot) {
        write_combined_one_shot(&cfg.output_dir, &bundles)?;
    }
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::PrepareData(a) => cmd_prepare(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a, false),
        Command::Curves(a) => cmd_report(a, true),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
