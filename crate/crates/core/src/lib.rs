//! Prompt-steerability benchmarking.
//!
//! The pipeline: persona statements are filtered and split ([`persona`]),
//! rendered into steered system prompts and polar profiling questions
//! ([`prompt`]), scored by a model ([`backend`]), folded into beta profiles
//! ([`profile`]) and compared with Wasserstein distances to yield signed
//! steerability indices and curves ([`metrics`]). [`orchestrator`] drives
//! full sweeps with resumable on-disk state.

pub mod backend;
pub mod catalog;
pub mod metrics;
pub mod orchestrator;
pub mod persona;
pub mod profile;
pub mod prompt;
pub mod seed;
