//! Readiness-level qualification for versioned prompt assets.
//!
//! The pipeline is: parse and validate an asset ([`asset_model`]), summarize
//! its evaluation batches ([`scoring`]), find the highest level its scores
//! and evidence support ([`gating`], [`evidence`]), then render and record
//! the result ([`reporting`], [`registry`]). [`cli`] wires these together.

pub mod asset_model;
pub mod cli;
pub mod dimension;
pub mod document;
pub mod evidence;
pub mod gating;
pub mod registry;
pub mod reporting;
pub mod scoring;

pub use dimension::{DimValues, DimensionKey, ScoreVector};
