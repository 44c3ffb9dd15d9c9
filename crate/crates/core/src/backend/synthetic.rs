//! Deterministic synthetic model with a known ground-truth behaviour.
//!
//! For each dimension the model has a baseline probability `b` of answering
//! consistently with the positive valence, and a response curve per
//! steering direction giving that probability as a function of the budget.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Answer, BackendError, Context, ScoreRequest, ScoringBackend};
use crate::persona::Direction;
use crate::seed::SeedPath;

/// Bound on the magnitude of synthetic logprob gaps.
pub const SYNTHETIC_GAP_CLAMP: f64 = 30.0;
const MIN_GAP_MAGNITUDE: f64 = 1e-9;

/// How the positive-consistent answer probability moves with the budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ResponseCurve {
    /// `g(k) = s + (b - s) * 2 / (1 + exp(rate * k))`: equals the baseline at
    /// `k = 0` and approaches `saturation` monotonically.
    Logistic { saturation: f64, rate: f64 },
    /// Explicit values for `k = 1, 2, ...`; the last value holds beyond the
    /// table.
    Table { values: Vec<f64> },
}

impl ResponseCurve {
    fn eval(&self, baseline: f64, budget_k: usize) -> f64 {
        if budget_k == 0 {
            return baseline;
        }
        let p = match self {
            ResponseCurve::Logistic { saturation, rate } => {
                let w = 2.0 / (1.0 + (rate * budget_k as f64).exp());
                saturation + (baseline - saturation) * w
            }
            ResponseCurve::Table { values } => match values.last() {
                None => baseline,
                Some(last) => *values.get(budget_k - 1).unwrap_or(last),
            },
        };
        p.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDimension {
    pub baseline: f64,
    pub positive: ResponseCurve,
    pub negative: ResponseCurve,
}

impl SyntheticDimension {
    /// A model that ignores steering entirely.
    pub fn unsteerable(baseline: f64) -> Self {
        let flat = ResponseCurve::Logistic {
            saturation: baseline,
            rate: 0.0,
        };
        Self {
            baseline,
            positive: flat.clone(),
            negative: flat,
        }
    }

    /// Probability of the positive-consistent answer: `g(k, direction)`.
    pub fn probability(&self, context: Context, budget_k: usize) -> f64 {
        match context {
            Context::Baseline => self.baseline.clamp(0.0, 1.0),
            Context::Steered(Direction::Positive) => self.positive.eval(self.baseline, budget_k),
            Context::Steered(Direction::Negative) => self.negative.eval(self.baseline, budget_k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SyntheticModelSpec {
    #[serde(default)]
    pub seed: u64,
    /// Used for dimensions without an explicit entry.
    #[serde(default)]
    pub default: Option<SyntheticDimension>,
    #[serde(default)]
    pub dimensions: BTreeMap<String, SyntheticDimension>,
}

impl SyntheticModelSpec {
    pub fn dimension(&self, name: &str) -> Result<&SyntheticDimension, BackendError> {
        self.dimensions
            .get(name)
            .or(self.default.as_ref())
            .ok_or_else(|| BackendError::UnknownDimension(name.to_owned()))
    }
}

/// Draws one answer. Positive-valence statements are answered `yes` with
/// probability `g`, negative-valence ones with probability `1 - g`. The
/// returned gap carries the sign of the drawn answer and the magnitude of
/// the log-odds of `yes`, clamped to [`SYNTHETIC_GAP_CLAMP`].
pub fn synthetic_answer<R: Rng + ?Sized>(
    spec: &SyntheticModelSpec,
    dimension: &str,
    context: Context,
    budget_k: usize,
    statement_valence: Direction,
    rng: &mut R,
) -> Result<(Answer, f64), BackendError> {
    let g = spec.dimension(dimension)?.probability(context, budget_k);
    let p_yes = match statement_valence {
        Direction::Positive => g,
        Direction::Negative => 1.0 - g,
    };
    let u: f64 = rng.gen();
    let answer = if u < p_yes { Answer::Yes } else { Answer::No };
    let magnitude = (p_yes / (1.0 - p_yes))
        .ln()
        .abs()
        .clamp(MIN_GAP_MAGNITUDE, SYNTHETIC_GAP_CLAMP);
    let gap = match answer {
        Answer::Yes => magnitude,
        Answer::No => -magnitude,
    };
    Ok((answer, gap))
}

/// Scoring backend over a [`SyntheticModelSpec`]. Each draw is seeded from
/// the request coordinates, so results do not depend on scheduling.
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    model_name: String,
    spec: SyntheticModelSpec,
}

impl SyntheticBackend {
    pub fn new(model_name: impl Into<String>, spec: SyntheticModelSpec) -> Self {
        Self {
            model_name: model_name.into(),
            spec,
        }
    }

    pub fn spec(&self) -> &SyntheticModelSpec {
        &self.spec
    }
}

impl ScoringBackend for SyntheticBackend {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn logprob_gap(&self, request: &ScoreRequest) -> Result<f64, BackendError> {
        let statement = &request.prompt.profiling_statement;
        let mut rng = SeedPath::new(self.spec.seed, "synthetic-draw")
            .with(&self.model_name)
            .with(&request.coords.tag(statement.text()))
            .rng();
        let (_, gap) = synthetic_answer(
            &self.spec,
            &request.coords.dimension,
            request.coords.context,
            request.coords.budget_k,
            statement.direction(),
            &mut rng,
        )?;
        Ok(gap)
    }

    fn is_stochastic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec_with(dim: SyntheticDimension) -> SyntheticModelSpec {
        SyntheticModelSpec {
            seed: 3,
            default: None,
            dimensions: BTreeMap::from([("d".to_owned(), dim)]),
        }
    }

    fn yes_rate(spec: &SyntheticModelSpec, ctx: Context, k: usize, valence: Direction, n: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let yes = (0..n)
            .filter(|_| synthetic_answer(spec, "d", ctx, k, valence, &mut rng).unwrap().0 == Answer::Yes)
            .count();
        yes as f64 / n as f64
    }

    #[test]
    fn logistic_curve_anchors() {
        let curve = ResponseCurve::Logistic {
            saturation: 0.95,
            rate: 1.2,
        };
        assert_eq!(curve.eval(0.7, 0), 0.7);
        let mut prev = 0.7;
        for k in 1..=20 {
            let g = curve.eval(0.7, k);
            assert!(g >= prev && g <= 0.95);
            prev = g;
        }
        assert!((curve.eval(0.7, 10) - 0.95).abs() < 1e-4);
    }

    #[test]
    fn fair_baseline_converges_to_half() {
        let spec = spec_with(SyntheticDimension::unsteerable(0.5));
        let n = 10_000;
        let rate = yes_rate(&spec, Context::Baseline, 0, Direction::Positive, n);
        assert!((rate - 0.5).abs() <= 3.0 * (0.25f64 / n as f64).sqrt(), "rate {rate}");
    }

    #[test]
    fn saturated_model_answers_deterministically() {
        let dim = SyntheticDimension {
            baseline: 0.5,
            positive: ResponseCurve::Table { values: vec![1.0] },
            negative: ResponseCurve::Table { values: vec![0.0] },
        };
        let spec = spec_with(dim);
        let pos = Context::Steered(Direction::Positive);
        assert_eq!(yes_rate(&spec, pos, 1, Direction::Positive, 500), 1.0);
        assert_eq!(yes_rate(&spec, pos, 4, Direction::Negative, 500), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (answer, gap) = synthetic_answer(&spec, "d", pos, 1, Direction::Positive, &mut rng).unwrap();
        assert_eq!(answer, Answer::Yes);
        assert_eq!(gap, SYNTHETIC_GAP_CLAMP);
    }

    #[test]
    fn gap_sign_matches_answer() {
        let spec = spec_with(SyntheticDimension::unsteerable(0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let (a, gap) = synthetic_answer(&spec, "d", Context::Baseline, 0, Direction::Negative, &mut rng).unwrap();
            assert_eq!(a, Answer::from_gap(gap));
            assert!(gap.is_finite() && gap.abs() <= SYNTHETIC_GAP_CLAMP);
        }
    }

    #[test]
    fn fixed_seed_same_sequence() {
        let spec = spec_with(SyntheticDimension::unsteerable(0.3));
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64)
                .map(|_| {
                    synthetic_answer(&spec, "d", Context::Baseline, 0, Direction::Positive, &mut rng)
                        .unwrap()
                        .0
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn unknown_dimension_errors_unless_default() {
        let mut spec = spec_with(SyntheticDimension::unsteerable(0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            synthetic_answer(&spec, "nope", Context::Baseline, 0, Direction::Positive, &mut rng),
            Err(BackendError::UnknownDimension(_))
        ));
        spec.default = Some(SyntheticDimension::unsteerable(0.2));
        assert!(synthetic_answer(&spec, "nope", Context::Baseline, 0, Direction::Positive, &mut rng).is_ok());
    }
}
