use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::manifest::{ModelStatus, RunManifest};
use super::run::ResultBundle;
use super::{unix_now, write_atomic, write_json, OrchestratorError, SCHEMA_VERSION};
use crate::metrics::{baseline_markdown, curve_svg, curves_csv, one_shot_markdown, OneShotTable};
use crate::persona::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Baseline,
    Curves,
    OneShot,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Baseline, ReportFormat::Curves, ReportFormat::OneShot];
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Baseline => "baseline",
            ReportFormat::Curves => "curves",
            ReportFormat::OneShot => "one-shot",
        })
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(ReportFormat::Baseline),
            "curves" => Ok(ReportFormat::Curves),
            "one-shot" | "one_shot" => Ok(ReportFormat::OneShot),
            other => Err(format!("unknown report format {other:?} (baseline, curves, one-shot)")),
        }
    }
}

/// Index of what a report invocation wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportManifest {
    pub schema_version: u32,
    pub model: String,
    pub formats: Vec<ReportFormat>,
    /// Paths relative to the model directory.
    pub files: Vec<String>,
    pub generated_at: u64,
}

/// Loads a model's result bundle, refusing incomplete runs.
pub fn load_bundle(model_dir: &Path) -> Result<ResultBundle, OrchestratorError> {
    let manifest = RunManifest::load(model_dir)?;
    if manifest.status != ModelStatus::Complete {
        let mut missing = manifest.incomplete_cells();
        if missing.is_empty() {
            missing.push(format!("(run status {:?})", manifest.status));
        }
        return Err(OrchestratorError::IncompleteBundle {
            model: manifest.model,
            missing,
        });
    }
    ResultBundle::read(model_dir)
}

fn file_stem(dimension: &str) -> String {
    dimension
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_curves(
    model_dir: &Path,
    bundle: &ResultBundle,
    dims: Option<&[String]>,
    files: &mut Vec<String>,
) -> Result<(), OrchestratorError> {
    let selected: Vec<_> = bundle
        .curves
        .iter()
        .filter(|c| dims.is_none_or(|d| d.contains(&c.dimension)))
        .collect();
    let mut names: Vec<&str> = selected.iter().map(|c| c.dimension.as_str()).collect();
    names.dedup();
    for name in names {
        let curves: Vec<_> = selected.iter().copied().filter(|c| c.dimension == name).collect();
        let rel = format!("report/curves/{}.svg", file_stem(name));
        write_atomic(&model_dir.join(&rel), curve_svg(name, &curves).as_bytes())?;
        files.push(rel);
    }
    let rel = "report/curves.csv".to_owned();
    write_atomic(&model_dir.join(&rel), curves_csv(selected.iter().copied())?.as_bytes())?;
    files.push(rel);
    Ok(())
}

fn one_shot_csv(table: &OneShotTable) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["category", "direction", "mean", "n_dimensions"])?;
    for row in table.rows.iter().chain(std::iter::once(&table.average)) {
        for d in Direction::BOTH {
            w.write_record([
                row.category.clone(),
                d.to_string(),
                row.get(d).map_or_else(String::new, |v| format!("{v:.6}")),
                row.n_dimensions.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Regenerates `report/` under `model_dir` for the requested formats. An
/// empty format list writes only the report manifest.
pub fn report(
    model_dir: &Path,
    bundle: &ResultBundle,
    formats: &[ReportFormat],
) -> Result<ReportManifest, OrchestratorError> {
    let mut files = Vec::new();
    for format in formats {
        match format {
            ReportFormat::Baseline => {
                let rel = "report/baseline.md".to_owned();
                write_atomic(&model_dir.join(&rel), baseline_markdown(&bundle.baseline).as_bytes())?;
                files.push(rel);
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["dimension", "mean", "std"])?;
                for r in &bundle.baseline {
                    w.write_record([r.dimension.clone(), format!("{:.6}", r.mean), format!("{:.6}", r.std)])?;
                }
                let rel = "report/baseline.csv".to_owned();
                write_atomic(&model_dir.join(&rel), &w.into_inner().map_err(|e| e.into_error())?)?;
                files.push(rel);
            }
            ReportFormat::Curves => write_curves(model_dir, bundle, None, &mut files)?,
            ReportFormat::OneShot => match &bundle.one_shot {
                Some(table) => {
                    let rel = "report/one_shot.md".to_owned();
                    let md = one_shot_markdown(&[(bundle.model.clone(), table.clone())]);
                    write_atomic(&model_dir.join(&rel), md.as_bytes())?;
                    files.push(rel);
                    let rel = "report/one_shot.csv".to_owned();
                    write_atomic(&model_dir.join(&rel), one_shot_csv(table)?.as_bytes())?;
                    files.push(rel);
                }
                None => log::warn!("{}: budgets do not include k = 1; no one-shot table", bundle.model),
            },
        }
    }
    let manifest = ReportManifest {
        schema_version: SCHEMA_VERSION,
        model: bundle.model.clone(),
        formats: formats.to_vec(),
        files,
        generated_at: unix_now(),
    };
    write_json(&model_dir.join("report").join("report_manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Writes curve SVGs and CSV only, optionally for a subset of dimensions.
pub fn curves_only(
    model_dir: &Path,
    bundle: &ResultBundle,
    dims: Option<&[String]>,
) -> Result<Vec<String>, OrchestratorError> {
    let mut files = Vec::new();
    write_curves(model_dir, bundle, dims, &mut files)?;
    Ok(files)
}

/// Cross-model one-shot table (one column per model) at `out_dir/one_shot.md`.
pub fn write_combined_one_shot(out_dir: &Path, bundles: &[ResultBundle]) -> Result<Option<String>, OrchestratorError> {
    let tables: Vec<(String, OneShotTable)> = bundles
        .iter()
        .filter_map(|b| b.one_shot.clone().map(|t| (b.model.clone(), t)))
        .collect();
    if tables.is_empty() {
        return Ok(None);
    }
    let md = one_shot_markdown(&tables);
    write_atomic(&out_dir.join("one_shot.md"), md.as_bytes())?;
    Ok(Some(md))
}
