use serde::{Deserialize, Serialize};

use super::distance::{QuantileGrid, DEFAULT_RESOLUTION};
use super::MetricsError;
use crate::persona::Direction;
use crate::profile::BetaProfile;

/// Normalizers at or below this are treated as zero.
const MIN_NORMALIZER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexComponents {
    /// W(base, maximal marginal of the direction)
    pub capacity: f64,
    /// W(steered, maximal marginal of the direction)
    pub residual: f64,
    /// W(positive maximal marginal, negative maximal marginal)
    pub normalizer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerabilityIndex {
    pub value: f64,
    pub direction: Direction,
    pub budget_k: usize,
    pub dimension: String,
    pub trial: usize,
    pub components: IndexComponents,
}

/// Signed steerability index of `steered` relative to `base`, normalized by
/// the distance between the two maximally steered marginals.
///
/// Dimension, budget and trial labels are taken from the steered profile's
/// provenance when present.
pub fn steerability_index(
    base: &BetaProfile,
    steered: &BetaProfile,
    max_pos: &BetaProfile,
    max_neg: &BetaProfile,
    direction: Direction,
) -> Result<SteerabilityIndex, MetricsError> {
    let grids = MarginalGrids::new(base, max_pos, max_neg, DEFAULT_RESOLUTION)?;
    grids.index(steered, direction)
}

/// Quantile grids of the profiles shared by every index of one trial, so
/// that each steered profile only costs one more grid.
#[derive(Debug, Clone)]
pub struct MarginalGrids {
    base: QuantileGrid,
    max_pos: QuantileGrid,
    max_neg: QuantileGrid,
    resolution: usize,
}

impl MarginalGrids {
    pub fn new(
        base: &BetaProfile,
        max_pos: &BetaProfile,
        max_neg: &BetaProfile,
        resolution: usize,
    ) -> Result<Self, MetricsError> {
        Ok(Self {
            base: QuantileGrid::new(base, resolution)?,
            max_pos: QuantileGrid::new(max_pos, resolution)?,
            max_neg: QuantileGrid::new(max_neg, resolution)?,
            resolution,
        })
    }

    /// From already computed grids, which must share one resolution.
    pub fn from_grids(base: QuantileGrid, max_pos: QuantileGrid, max_neg: QuantileGrid) -> Result<Self, MetricsError> {
        let resolution = base.values().len();
        if resolution == 0 || max_pos.values().len() != resolution || max_neg.values().len() != resolution {
            return Err(MetricsError::Resolution);
        }
        Ok(Self {
            base,
            max_pos,
            max_neg,
            resolution,
        })
    }

    pub fn normalizer(&self) -> f64 {
        self.max_pos.distance(&self.max_neg)
    }

    pub fn index(&self, steered: &BetaProfile, direction: Direction) -> Result<SteerabilityIndex, MetricsError> {
        if self.normalizer() <= MIN_NORMALIZER {
            return Err(MetricsError::DegenerateProfilingSample);
        }
        let steered_grid = QuantileGrid::new(steered, self.resolution)?;
        self.index_with_grid(steered, &steered_grid, direction)
    }

    /// Like [`MarginalGrids::index`] with the steered profile's grid already
    /// computed; `steered` only supplies the labels.
    pub fn index_with_grid(
        &self,
        steered: &BetaProfile,
        steered_grid: &QuantileGrid,
        direction: Direction,
    ) -> Result<SteerabilityIndex, MetricsError> {
        let normalizer = self.normalizer();
        if normalizer <= MIN_NORMALIZER {
            return Err(MetricsError::DegenerateProfilingSample);
        }
        if steered_grid.values().len() != self.resolution {
            return Err(MetricsError::Resolution);
        }
        let target = match direction {
            Direction::Positive => &self.max_pos,
            Direction::Negative => &self.max_neg,
        };
        let capacity = self.base.distance(target);
        let residual = steered_grid.distance(target);
        let (dimension, budget_k, trial) = match &steered.provenance {
            Some(p) => (p.dimension.clone(), p.budget_k, p.trial),
            None => (String::new(), 0, 0),
        };
        Ok(SteerabilityIndex {
            value: (capacity - residual) / normalizer,
            direction,
            budget_k,
            dimension,
            trial,
            components: IndexComponents {
                capacity,
                residual,
                normalizer,
            },
        })
    }
}
