//! Category one-shot tables and baseline tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::curve::SteerabilityCurve;
use super::MetricsError;
use crate::persona::Direction;
use crate::profile::ProfileAggregate;

pub const OTHER_CATEGORY: &str = "other";

/// The categories summarized in the one-shot table by default.
pub const ONE_SHOT_CATEGORIES: [&str; 4] = ["personality", "politics", "ethics", "risks"];

/// Dimension → category label. Unmapped dimensions fall into `other`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryMap {
    map: BTreeMap<String, String>,
}

impl CategoryMap {
    pub fn new(map: BTreeMap<String, String>) -> Self {
        Self { map }
    }

    pub fn category_of(&self, dimension: &str) -> &str {
        self.map.get(dimension).map(String::as_str).unwrap_or(OTHER_CATEGORY)
    }

    pub fn insert(&mut self, dimension: impl Into<String>, category: impl Into<String>) {
        self.map.insert(dimension.into(), category.into());
    }
}

impl FromIterator<(String, String)> for CategoryMap {
    fn from_iter<I: IntoIterator<Item = (String, String)>>(iter: I) -> Self {
        Self {
            map: iter.into_iter().collect(),
        }
    }
}

/// How the bottom "average" row is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AverageMode {
    /// Mean of the category rows.
    #[default]
    OverCategories,
    /// Mean over every member dimension of the listed categories.
    OverDimensions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneShotRow {
    pub category: String,
    pub positive: Option<f64>,
    pub negative: Option<f64>,
    pub n_dimensions: usize,
}

impl OneShotRow {
    pub fn get(&self, direction: Direction) -> Option<f64> {
        match direction {
            Direction::Positive => self.positive,
            Direction::Negative => self.negative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneShotTable {
    pub rows: Vec<OneShotRow>,
    pub average: OneShotRow,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Mean k = 1 index per category and direction.
///
/// `categories` restricts and orders the rows; `None` lists every category
/// present. Requested categories without member dimensions are omitted.
pub fn one_shot_summary(
    curves: &[SteerabilityCurve],
    category_map: &CategoryMap,
    categories: Option<&[&str]>,
    average: AverageMode,
) -> Result<OneShotTable, MetricsError> {
    // category -> direction -> k=1 means
    let mut grouped: BTreeMap<&str, BTreeMap<Direction, Vec<f64>>> = BTreeMap::new();
    let mut dims: BTreeMap<&str, std::collections::BTreeSet<&str>> = BTreeMap::new();
    for curve in curves {
        let point = curve.at(1).ok_or_else(|| MetricsError::MissingOneShot {
            dimension: curve.dimension.clone(),
            direction: curve.direction,
        })?;
        let category = category_map.category_of(&curve.dimension);
        grouped
            .entry(category)
            .or_default()
            .entry(curve.direction)
            .or_default()
            .push(point.mean);
        dims.entry(category).or_default().insert(&curve.dimension);
    }
    let order: Vec<&str> = match categories {
        Some(list) => list.to_vec(),
        None => grouped.keys().copied().collect(),
    };
    let mut rows = Vec::new();
    let mut all: BTreeMap<Direction, Vec<f64>> = BTreeMap::new();
    for category in order {
        let Some(by_dir) = grouped.get(category) else {
            log::warn!("category {category} has no benchmarked dimensions; omitted");
            continue;
        };
        let get = |d: Direction| by_dir.get(&d).map(Vec::as_slice).unwrap_or(&[]);
        for d in Direction::BOTH {
            all.entry(d).or_default().extend_from_slice(get(d));
        }
        rows.push(OneShotRow {
            category: category.to_owned(),
            positive: mean(get(Direction::Positive)),
            negative: mean(get(Direction::Negative)),
            n_dimensions: dims.get(category).map_or(0, |s| s.len()),
        });
    }
    let avg = |d: Direction| match average {
        AverageMode::OverCategories => mean(&rows.iter().filter_map(|r| r.get(d)).collect::<Vec<_>>()),
        AverageMode::OverDimensions => all.get(&d).and_then(|v| mean(v)),
    };
    let average = OneShotRow {
        category: "average".into(),
        positive: avg(Direction::Positive),
        negative: avg(Direction::Negative),
        n_dimensions: rows.iter().map(|r| r.n_dimensions).sum(),
    };
    Ok(OneShotTable { rows, average })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.2}"))
}

/// Markdown table with one column per model and two lines (positive, then
/// negative) per category.
pub fn one_shot_markdown(tables: &[(String, OneShotTable)]) -> String {
    let mut out = String::from("| category | direction |");
    for (model, _) in tables {
        let _ = write!(out, " {model} |");
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---:|".repeat(tables.len()));
    out.push('\n');
    let mut categories: Vec<String> = Vec::new();
    for (_, t) in tables {
        for r in &t.rows {
            if !categories.contains(&r.category) {
                categories.push(r.category.clone());
            }
        }
    }
    let lookup = |t: &OneShotTable, c: &str| -> Option<OneShotRow> {
        if c == "average" {
            Some(t.average.clone())
        } else {
            t.rows.iter().find(|r| r.category == c).cloned()
        }
    };
    categories.push("average".into());
    for c in &categories {
        for d in Direction::BOTH {
            let label = if d == Direction::Positive { c.as_str() } else { "" };
            let label = if c == "average" && !label.is_empty() {
                "**average**"
            } else {
                label
            };
            let _ = write!(out, "| {label} | {} |", d.symbol());
            for (_, t) in tables {
                let v = lookup(t, c).and_then(|r| r.get(d));
                let _ = write!(out, " {} |", fmt_opt(v));
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub dimension: String,
    pub mean: f64,
    pub std: f64,
}

impl BaselineRow {
    /// `mean ± std` to three decimals.
    pub fn formatted(&self) -> String {
        format!("{:.3} ± {:.3}", self.mean, self.std)
    }
}

/// Mixture mean and standard deviation of each dimension's baseline.
pub fn baseline_summary(aggregates: &BTreeMap<String, ProfileAggregate>) -> Vec<BaselineRow> {
    aggregates
        .iter()
        .map(|(dimension, agg)| BaselineRow {
            dimension: dimension.clone(),
            mean: agg.mean,
            std: agg.std,
        })
        .collect()
}

pub fn baseline_markdown(rows: &[BaselineRow]) -> String {
    let mut out = String::from("| persona_dim | probability (mean ± std.) |\n|---|---|\n");
    for r in rows {
        let _ = writeln!(out, "| {} | {} |", r.dimension, r.formatted());
    }
    out
}
