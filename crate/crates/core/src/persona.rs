//! Persona statement ingestion, dimension filtering and steering/profiling
//! splits.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::seed::SeedPath;

/// Valence of a statement, and the direction a model is steered in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Positive,
    Negative,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Positive, Direction::Negative];

    pub fn opposite(self) -> Self {
        match self {
            Direction::Positive => Direction::Negative,
            Direction::Negative => Direction::Positive,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Positive => "positive",
            Direction::Negative => "negative",
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Direction::Positive => '+',
            Direction::Negative => '-',
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" | "+" => Ok(Direction::Positive),
            "negative" | "neg" | "-" => Ok(Direction::Negative),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatementError {
    #[error("statement text is empty")]
    Empty,
    #[error("statement text contains a line break")]
    Multiline,
    #[error("label confidence {0} outside [0.5, 1]")]
    ConfidenceOutOfRange(f64),
}

/// One labeled persona statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStatement")]
pub struct PersonaStatement {
    text: String,
    dimension: String,
    direction: Direction,
    label_confidence: f64,
}

#[derive(Deserialize)]
struct RawStatement {
    text: String,
    dimension: String,
    direction: Direction,
    label_confidence: f64,
}

impl TryFrom<RawStatement> for PersonaStatement {
    type Error = StatementError;

    fn try_from(raw: RawStatement) -> Result<Self, Self::Error> {
        PersonaStatement::new(raw.text, raw.dimension, raw.direction, raw.label_confidence)
    }
}

impl PersonaStatement {
    /// Builds a statement, trimming surrounding whitespace from the text.
    ///
    /// Statements are rendered verbatim on their own line in prompts, so
    /// interior line breaks are rejected here rather than at render time.
    pub fn new(
        text: impl AsRef<str>,
        dimension: impl Into<String>,
        direction: Direction,
        label_confidence: f64,
    ) -> Result<Self, StatementError> {
        let text = text.as_ref().trim();
        if text.is_empty() {
            return Err(StatementError::Empty);
        }
        if text.contains(['\n', '\r']) {
            return Err(StatementError::Multiline);
        }
        if !(0.5..=1.0).contains(&label_confidence) {
            return Err(StatementError::ConfidenceOutOfRange(label_confidence));
        }
        Ok(Self {
            text: text.to_owned(),
            dimension: dimension.into(),
            direction,
            label_confidence,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn dimension(&self) -> &str {
        &self.dimension
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn label_confidence(&self) -> f64 {
        self.label_confidence
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordErrorKind {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("missing field {0:?}")]
    MissingField(&'static str),
    #[error("unrecognised answer_matching_behavior {0:?}")]
    BadMarker(String),
    #[error(transparent)]
    Statement(#[from] StatementError),
}

/// A rejected input line.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct RecordError {
    pub line: usize,
    pub kind: RecordErrorKind,
}

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("{dimension}: {source}")]
    Record {
        dimension: String,
        #[source]
        source: RecordError,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid filter policy: {0}")]
    Policy(String),
    #[error(
        "dimension {dimension}: {direction} direction has {available} statements, \
         {needed} required for the steering split"
    )]
    InsufficientStatements {
        dimension: String,
        direction: Direction,
        needed: usize,
        available: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// The first malformed line aborts parsing.
    #[default]
    Strict,
    /// Malformed lines are collected and skipped.
    Lenient,
}

#[derive(Debug, Default)]
pub struct ParsedRecords {
    pub statements: Vec<PersonaStatement>,
    pub rejected: Vec<RecordError>,
}

#[derive(Deserialize)]
struct UpstreamRecord {
    statement: Option<String>,
    answer_matching_behavior: Option<String>,
    label_confidence: Option<f64>,
}

fn parse_line(line: &str, dimension: &str) -> Result<PersonaStatement, RecordErrorKind> {
    let record: UpstreamRecord = serde_json::from_str(line).map_err(|e| RecordErrorKind::Json(e.to_string()))?;
    let text = record.statement.ok_or(RecordErrorKind::MissingField("statement"))?;
    let marker = record
        .answer_matching_behavior
        .ok_or(RecordErrorKind::MissingField("answer_matching_behavior"))?;
    let confidence = record
        .label_confidence
        .ok_or(RecordErrorKind::MissingField("label_confidence"))?;
    let direction = match marker.trim() {
        "Yes" => Direction::Positive,
        "No" => Direction::Negative,
        _ => return Err(RecordErrorKind::BadMarker(marker)),
    };
    Ok(PersonaStatement::new(text, dimension, direction, confidence)?)
}

/// Parses line-delimited upstream persona records for one dimension.
///
/// Blank lines are ignored. Line numbers in errors are 1-based.
pub fn parse_raw_records<R: BufRead>(
    source: R,
    dimension: &str,
    mode: ParseMode,
) -> Result<ParsedRecords, PersonaError> {
    let mut out = ParsedRecords::default();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, dimension) {
            Ok(statement) => out.statements.push(statement),
            Err(kind) => {
                let err = RecordError { line: idx + 1, kind };
                match mode {
                    ParseMode::Strict => {
                        return Err(PersonaError::Record {
                            dimension: dimension.to_owned(),
                            source: err,
                        })
                    }
                    ParseMode::Lenient => {
                        log::warn!("{dimension}: skipping {err}");
                        out.rejected.push(err);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Loads every `*.jsonl` file in `dir`; the dimension is the file stem.
pub fn load_raw_dir(dir: &Path, mode: ParseMode) -> Result<BTreeMap<String, Vec<PersonaStatement>>, PersonaError> {
    let mut groups = BTreeMap::new();
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
        .collect();
    paths.sort();
    for path in paths {
        let Some(dimension) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let file = std::io::BufReader::new(std::fs::File::open(&path)?);
        let parsed = parse_raw_records(file, dimension, mode)?;
        groups.insert(dimension.to_owned(), parsed.statements);
    }
    Ok(groups)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub min_confidence: f64,
    pub min_count_per_direction: usize,
    pub prune_to: usize,
    #[serde(default)]
    pub dimension_allowlist: Option<BTreeSet<String>>,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            min_confidence: 0.85,
            min_count_per_direction: 300,
            prune_to: 300,
            dimension_allowlist: None,
        }
    }
}

impl FilterPolicy {
    pub fn validate(&self) -> Result<(), PersonaError> {
        if !(0.5..=1.0).contains(&self.min_confidence) {
            return Err(PersonaError::Policy(format!(
                "min_confidence {} outside [0.5, 1]",
                self.min_confidence
            )));
        }
        if self.min_count_per_direction == 0 || self.prune_to == 0 {
            return Err(PersonaError::Policy("counts must be positive".into()));
        }
        Ok(())
    }
}

/// Statements of one dimension that survived filtering, per direction,
/// ordered by descending confidence then statement text.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrunedDimension {
    pub positive: Vec<PersonaStatement>,
    pub negative: Vec<PersonaStatement>,
}

impl PrunedDimension {
    pub fn direction(&self, direction: Direction) -> &[PersonaStatement] {
        match direction {
            Direction::Positive => &self.positive,
            Direction::Negative => &self.negative,
        }
    }
}

fn by_confidence_then_text(a: &PersonaStatement, b: &PersonaStatement) -> std::cmp::Ordering {
    b.label_confidence
        .total_cmp(&a.label_confidence)
        .then_with(|| a.text.cmp(&b.text))
}

/// Duplicate texts collapse to the highest-confidence copy.
fn dedup_max_confidence(statements: &[PersonaStatement]) -> Vec<PersonaStatement> {
    let mut best: HashMap<&str, &PersonaStatement> = HashMap::new();
    for s in statements {
        best.entry(s.text.as_str())
            .and_modify(|cur| {
                if s.label_confidence > cur.label_confidence {
                    *cur = s;
                }
            })
            .or_insert(s);
    }
    best.into_values().cloned().collect()
}

/// Applies the confidence/count policy to each dimension.
pub fn filter_dimensions(
    groups: &BTreeMap<String, Vec<PersonaStatement>>,
    policy: &FilterPolicy,
) -> BTreeMap<String, PrunedDimension> {
    let mut out = BTreeMap::new();
    for (dimension, statements) in groups {
        let mut kept = dedup_max_confidence(statements);
        kept.retain(|s| s.label_confidence >= policy.min_confidence);
        kept.sort_by(by_confidence_then_text);
        let (mut positive, mut negative): (Vec<_>, Vec<_>) =
            kept.into_iter().partition(|s| s.direction == Direction::Positive);
        if positive.len() < policy.min_count_per_direction || negative.len() < policy.min_count_per_direction {
            log::debug!(
                "dropping {dimension}: {} positive / {} negative qualifying",
                positive.len(),
                negative.len()
            );
            continue;
        }
        positive.truncate(policy.prune_to);
        negative.truncate(policy.prune_to);
        out.insert(dimension.clone(), PrunedDimension { positive, negative });
    }
    if let Some(allow) = &policy.dimension_allowlist {
        out.retain(|dimension, _| allow.contains(dimension));
    }
    out
}

/// Steering and profiling splits of one persona dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionDataset {
    pub dimension: String,
    pub steering_pos: Vec<PersonaStatement>,
    pub steering_neg: Vec<PersonaStatement>,
    pub profiling_pos: Vec<PersonaStatement>,
    pub profiling_neg: Vec<PersonaStatement>,
}

impl DimensionDataset {
    pub fn steering(&self, direction: Direction) -> &[PersonaStatement] {
        match direction {
            Direction::Positive => &self.steering_pos,
            Direction::Negative => &self.steering_neg,
        }
    }

    pub fn profiling(&self, direction: Direction) -> &[PersonaStatement] {
        match direction {
            Direction::Positive => &self.profiling_pos,
            Direction::Negative => &self.profiling_neg,
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("dataset serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Splits one dimension with a seeded shuffle per direction.
pub fn split_dimension(
    dimension: &str,
    pruned: &PrunedDimension,
    seed: u64,
    steering_per_direction: usize,
) -> Result<DimensionDataset, PersonaError> {
    let mut halves = Vec::with_capacity(2);
    for direction in Direction::BOTH {
        let mut pool = pruned.direction(direction).to_vec();
        if pool.len() < steering_per_direction {
            return Err(PersonaError::InsufficientStatements {
                dimension: dimension.to_owned(),
                direction,
                needed: steering_per_direction,
                available: pool.len(),
            });
        }
        let mut rng = SeedPath::new(seed, "split")
            .with(dimension)
            .with(direction.as_str())
            .rng();
        pool.shuffle(&mut rng);
        let profiling = pool.split_off(steering_per_direction);
        halves.push((pool, profiling));
    }
    let (steering_neg, profiling_neg) = halves.pop().expect("two directions");
    let (steering_pos, profiling_pos) = halves.pop().expect("two directions");
    Ok(DimensionDataset {
        dimension: dimension.to_owned(),
        steering_pos,
        steering_neg,
        profiling_pos,
        profiling_neg,
    })
}

/// Splits every pruned dimension. Fails on the first deficient dimension.
pub fn split_dataset(
    pruned: &BTreeMap<String, PrunedDimension>,
    seed: u64,
    steering_per_direction: usize,
) -> Result<BTreeMap<String, DimensionDataset>, PersonaError> {
    pruned
        .iter()
        .map(|(dimension, p)| {
            split_dimension(dimension, p, seed, steering_per_direction).map(|d| (dimension.clone(), d))
        })
        .collect()
}

/// Writes the processed table: statement, direction, label_confidence,
/// persona_dim.
pub fn write_processed_csv<'a, W: Write>(
    writer: W,
    statements: impl IntoIterator<Item = &'a PersonaStatement>,
) -> Result<(), PersonaError> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["statement", "direction", "label_confidence", "persona_dim"])?;
    for s in statements {
        csv.write_record([
            s.text(),
            s.direction().as_str(),
            &s.label_confidence().to_string(),
            s.dimension(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
