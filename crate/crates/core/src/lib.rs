//! Data-driven stochastic simulation of odor plume encounters.
//!
//! The pipeline learns from a *template dataset* (a recorded odor time
//! series along a trajectory) and produces new odor traces for arbitrary
//! trajectories whose whiff statistics match the template:
//!
//! 1. [`ingest`] parses the template, maps it into the streakline frame and
//!    segments whiffs.
//! 2. [`plume_fit`] turns whiff onsets into a smooth spatial onset
//!    probability field by maximum-likelihood fitting of a Gaussian plume.
//! 3. [`generator`] runs the stochastic whiff/blank state machine with an
//!    AR(2) concentration chain in logit space.
//! 4. [`validate`] compares whiff statistics of two sources with sliced
//!    Wasserstein distances and permutation null distributions.
//! 5. [`agent`] drives cast-and-surge trackers with the generator and
//!    compares trajectory feature clusters.

pub mod agent;
pub mod config;
pub mod error;
pub mod filters;
pub mod generator;
pub mod ingest;
pub mod pipeline;
pub mod plume_fit;
pub mod rng;
pub mod synth;
pub mod validate;

pub use error::{CosmosError, Result};
