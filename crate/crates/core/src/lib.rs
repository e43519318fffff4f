//! Aboveground biomass (AGB) mapping from airborne LiDAR with an area-based
//! approach: point-cloud predictors, plot selection with growth adjustment,
//! a stacked ensemble of three regressors, area-of-applicability masking,
//! newest-wins mosaicking, and a multi-scale map agreement battery.
//!
//! Every stochastic routine takes an explicit seed. Parallel work derives
//! per-item seeds with [`seeds::derive_seed`], so results do not depend on
//! the number of worker threads.

pub mod aoa;
pub mod assess;
pub mod config;
pub mod container;
pub mod ensemble;
pub mod error;
pub mod geodata;
pub mod learners;
pub mod mapper;
pub mod pipeline;
pub mod plotselect;
pub mod pointcloud;
pub mod predictors;
pub mod seeds;
pub mod stats;
pub mod synth;
pub mod tabular;

pub use error::{Error, Result};
