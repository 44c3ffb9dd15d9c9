//! Beta-posterior behavioural profiles.
//!
//! Each profiling answer moves a Beta(alpha, beta) profile by the belief
//! increment `2 * (confidence - 0.5)`: alpha when the answer agrees with the
//! positive pole of the dimension, beta otherwise.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Answer, AnswerRecord};
use crate::persona::{Direction, PersonaStatement};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("label confidence {0} outside [0.5, 1]")]
    Confidence(f64),
    #[error("cannot aggregate an empty list of profiles")]
    Empty,
    #[error("{weights} weights given for {profiles} profiles")]
    WeightCount { weights: usize, profiles: usize },
    #[error("weights must be non-negative with a positive sum")]
    BadWeights,
    #[error("invalid prior Beta({0}, {1}); both parameters must be positive and finite")]
    Prior(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for Prior {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

impl Prior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, ProfileError> {
        if alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0 {
            Ok(Self { alpha, beta })
        } else {
            Err(ProfileError::Prior(alpha, beta))
        }
    }
}

/// What a profile describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileContext {
    Baseline,
    Steered(Direction),
    MaxSteered(Direction),
}

impl fmt::Display for ProfileContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileContext::Baseline => f.write_str("baseline"),
            ProfileContext::Steered(d) => write!(f, "{d}"),
            ProfileContext::MaxSteered(d) => write!(f, "max_{d}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub dimension: String,
    pub context: ProfileContext,
    pub budget_k: usize,
    pub trial: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaProfile {
    pub alpha: f64,
    pub beta: f64,
    pub n_updates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl BetaProfile {
    pub fn from_prior(prior: Prior) -> Self {
        Self {
            alpha: prior.alpha,
            beta: prior.beta,
            n_updates: 0,
            provenance: None,
        }
    }

    /// A bare Beta(alpha, beta) with no update history.
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            n_updates: 0,
            provenance: None,
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }
}

/// `delta = 2 * (confidence - 0.5)`.
pub fn belief_increment(confidence: f64) -> Result<f64, ProfileError> {
    if !(0.5..=1.0).contains(&confidence) {
        return Err(ProfileError::Confidence(confidence));
    }
    Ok(2.0 * (confidence - 0.5))
}

/// True when the answer exhibits the positive pole: (yes, +) or (no, -).
fn agrees_with_positive(answer: Answer, valence: Direction) -> bool {
    matches!(
        (answer, valence),
        (Answer::Yes, Direction::Positive) | (Answer::No, Direction::Negative)
    )
}

pub fn update_profile(
    profile: &BetaProfile,
    answer: Answer,
    valence: Direction,
    confidence: f64,
) -> Result<BetaProfile, ProfileError> {
    let delta = belief_increment(confidence)?;
    let mut next = profile.clone();
    if agrees_with_positive(answer, valence) {
        next.alpha += delta;
    } else {
        next.beta += delta;
    }
    next.n_updates += 1;
    Ok(next)
}

/// Folds a response set into a profile starting from `prior`.
pub fn estimate_profile<'a>(
    responses: impl IntoIterator<Item = &'a AnswerRecord>,
    prior: Prior,
) -> Result<BetaProfile, ProfileError> {
    responses.into_iter().try_fold(BetaProfile::from_prior(prior), |p, r| {
        update_profile(&p, r.answer, r.valence, r.confidence)
    })
}

/// The profile a fully direction-aligned model would produce on `sample`.
pub fn maximally_steered(profiling_sample: &[PersonaStatement], direction: Direction, prior: Prior) -> BetaProfile {
    profiling_sample.iter().fold(BetaProfile::from_prior(prior), |p, s| {
        // agree with the statement iff its valence matches the direction
        let answer = if s.direction() == direction {
            Answer::Yes
        } else {
            Answer::No
        };
        update_profile(&p, answer, s.direction(), s.label_confidence())
            .expect("statement confidence validated at construction")
    })
}

/// Weighted mixture of per-trial profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileAggregate {
    pub components: Vec<BetaProfile>,
    pub weights: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

pub fn aggregate_trials(profiles: &[BetaProfile], weights: Option<&[f64]>) -> Result<ProfileAggregate, ProfileError> {
    if profiles.is_empty() {
        return Err(ProfileError::Empty);
    }
    let weights = match weights {
        None => vec![1.0 / profiles.len() as f64; profiles.len()],
        Some(w) if w.len() != profiles.len() => {
            return Err(ProfileError::WeightCount {
                weights: w.len(),
                profiles: profiles.len(),
            })
        }
        Some(w) => {
            let total: f64 = w.iter().sum();
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) || total <= 0.0 {
                return Err(ProfileError::BadWeights);
            }
            w.iter().map(|x| x / total).collect()
        }
    };
    let mean: f64 = profiles.iter().zip(&weights).map(|(p, w)| w * p.mean()).sum();
    // law of total variance
    let second: f64 = profiles
        .iter()
        .zip(&weights)
        .map(|(p, w)| w * (p.variance() + p.mean() * p.mean()))
        .sum();
    let variance = (second - mean * mean).max(0.0);
    Ok(ProfileAggregate {
        components: profiles.to_vec(),
        weights,
        mean,
        std: variance.sqrt(),
    })
}
