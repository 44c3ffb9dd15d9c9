//! Order-1 Wasserstein distance between profiles on [0, 1], computed as the
//! quantile-function integral `∫₀¹ |F⁻¹(u) − G⁻¹(u)| du` with the midpoint
//! rule on uniform quantile nodes.

use super::beta::{invert_cdf, BetaDist, UnitDistribution};
use super::MetricsError;
use crate::profile::{BetaProfile, ProfileAggregate};

pub const DEFAULT_RESOLUTION: usize = 2048;

/// A profile or a trial mixture of profiles.
#[derive(Debug, Clone, Copy)]
pub enum ProfileRef<'a> {
    Beta(&'a BetaProfile),
    Mixture(&'a ProfileAggregate),
}

impl<'a> From<&'a BetaProfile> for ProfileRef<'a> {
    fn from(p: &'a BetaProfile) -> Self {
        ProfileRef::Beta(p)
    }
}

impl<'a> From<&'a ProfileAggregate> for ProfileRef<'a> {
    fn from(p: &'a ProfileAggregate) -> Self {
        ProfileRef::Mixture(p)
    }
}

fn checked(p: &BetaProfile) -> Result<BetaDist, MetricsError> {
    if p.alpha.is_finite() && p.beta.is_finite() && p.alpha > 0.0 && p.beta > 0.0 {
        Ok(BetaDist::new(p.alpha, p.beta))
    } else {
        Err(MetricsError::InvalidParameters {
            alpha: p.alpha,
            beta: p.beta,
        })
    }
}

impl BetaProfile {
    pub fn cdf(&self, x: f64) -> Result<f64, MetricsError> {
        Ok(checked(self)?.cdf(x))
    }

    pub fn quantile(&self, q: f64) -> Result<f64, MetricsError> {
        Ok(super::beta::beta_quantile(&checked(self)?, q))
    }
}

/// Regularized incomplete beta I_x(alpha, beta) of a profile.
pub fn beta_cdf(profile: &BetaProfile, x: f64) -> Result<f64, MetricsError> {
    profile.cdf(x)
}

pub fn beta_quantile(profile: &BetaProfile, q: f64) -> Result<f64, MetricsError> {
    profile.quantile(q)
}

#[derive(Debug, Clone)]
enum Prepared {
    Beta(BetaDist),
    Mixture(Vec<(f64, BetaDist)>),
}

impl UnitDistribution for Prepared {
    fn cdf(&self, x: f64) -> f64 {
        match self {
            Prepared::Beta(b) => b.cdf(x),
            Prepared::Mixture(parts) => parts.iter().map(|(w, b)| w * b.cdf(x)).sum(),
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        match self {
            Prepared::Beta(b) => b.pdf(x),
            Prepared::Mixture(parts) => parts.iter().map(|(w, b)| w * b.pdf(x)).sum(),
        }
    }
}

fn prepare(p: ProfileRef<'_>) -> Result<Prepared, MetricsError> {
    match p {
        ProfileRef::Beta(b) => Ok(Prepared::Beta(checked(b)?)),
        ProfileRef::Mixture(m) => {
            if m.components.is_empty() || m.components.len() != m.weights.len() {
                return Err(MetricsError::EmptyMixture);
            }
            let parts = m
                .weights
                .iter()
                .zip(&m.components)
                .map(|(w, c)| checked(c).map(|b| (*w, b)))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Prepared::Mixture(parts))
        }
    }
}

/// Quantile function sampled at the midpoints `(j + 1/2) / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileGrid {
    values: Vec<f64>,
}

impl QuantileGrid {
    pub fn new<'a>(profile: impl Into<ProfileRef<'a>>, resolution: usize) -> Result<Self, MetricsError> {
        if resolution == 0 {
            return Err(MetricsError::Resolution);
        }
        let dist = prepare(profile.into())?;
        let n = resolution as f64;
        let mut values = Vec::with_capacity(resolution);
        // nodes are increasing, so each root is bracketed below by the last
        // and a first-order step from it is a good starting point
        let mut lo = 0.0;
        let mut guess = 0.5;
        for j in 0..resolution {
            let u = (j as f64 + 0.5) / n;
            let x = invert_cdf(&dist, u, lo, 1.0, guess);
            values.push(x);
            lo = x;
            let d = dist.pdf(x);
            guess = if d > 0.0 { x + 1.0 / (n * d) } else { x };
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn distance(&self, other: &QuantileGrid) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "grid resolutions differ");
        let n = self.values.len() as f64;
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / n
    }
}

pub fn wasserstein_with<'a, 'b>(
    p: impl Into<ProfileRef<'a>>,
    q: impl Into<ProfileRef<'b>>,
    resolution: usize,
) -> Result<f64, MetricsError> {
    let gp = QuantileGrid::new(p, resolution)?;
    let gq = QuantileGrid::new(q, resolution)?;
    Ok(gp.distance(&gq))
}

/// W1 at the default resolution.
pub fn wasserstein<'a, 'b>(p: impl Into<ProfileRef<'a>>, q: impl Into<ProfileRef<'b>>) -> Result<f64, MetricsError> {
    wasserstein_with(p, q, DEFAULT_RESOLUTION)
}
