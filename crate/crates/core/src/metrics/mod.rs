//! Distances between profiles, steerability indices, curves and summaries.

pub mod beta;
mod curve;
mod distance;
mod index;
mod plot;
mod summary;

use thiserror::Error;

use crate::persona::Direction;

pub use curve::{build_curve, CurvePoint, SteerabilityCurve};
pub use distance::{
    beta_cdf, beta_quantile, wasserstein, wasserstein_with, ProfileRef, QuantileGrid, DEFAULT_RESOLUTION,
};
pub use index::{steerability_index, IndexComponents, MarginalGrids, SteerabilityIndex};
pub use plot::{curve_svg, curves_csv};
pub use summary::{
    baseline_markdown, baseline_summary, one_shot_markdown, one_shot_summary, AverageMode, BaselineRow, CategoryMap,
    OneShotRow, OneShotTable, ONE_SHOT_CATEGORIES, OTHER_CATEGORY,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("invalid beta parameters ({alpha}, {beta})")]
    InvalidParameters { alpha: f64, beta: f64 },
    #[error("mixture has no components")]
    EmptyMixture,
    #[error("quantile resolution must be positive")]
    Resolution,
    #[error("degenerate profiling sample: maximally steered marginals coincide")]
    DegenerateProfilingSample,
    #[error("{dimension}/{direction}: missing (k, trial) cells {cells:?}")]
    MissingCells {
        dimension: String,
        direction: Direction,
        cells: Vec<(usize, usize)>,
    },
    #[error("{dimension}/{direction}: curve has no k = 1 point")]
    MissingOneShot { dimension: String, direction: Direction },
}
