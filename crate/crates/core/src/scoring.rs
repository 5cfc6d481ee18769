//! Aggregation of evaluation batches into per-dimension means and
//! instabilities, and the weighted readiness score.

use std::collections::HashSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dimension::{DimValues, DimensionKey, ScoreVector};
use crate::gating::ThresholdProfile;

pub const DEFAULT_LAMBDA: f64 = 0.02;
pub const DEFAULT_MIN_BATCHES: u32 = 3;
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// One scored evaluation run, stored as `evidence/batches/<name>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationBatch {
    pub batch_id: String,
    pub timestamp: DateTime<Utc>,
    pub evaluator: String,
    pub sample_count: u32,
    pub scores: ScoreVector,
}

impl EvaluationBatch {
    fn check(&self) -> Result<(), ScoringError> {
        let invalid = |reason: &str| ScoringError::InvalidBatch {
            batch_id: self.batch_id.clone(),
            reason: reason.to_string(),
        };
        if self.batch_id.trim().is_empty() {
            return Err(invalid("batch_id must be non-empty"));
        }
        if self.sample_count == 0 {
            return Err(invalid("sample_count must be positive"));
        }
        // ScoreVector guarantees this when built through its constructors.
        if ScoreVector::try_from(*self.scores.values()).is_err() {
            return Err(invalid("scores must lie in [0, 100]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringConfig {
    pub weights: DimValues,
    pub lambda: f64,
    pub min_batches: u32,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            weights: DimValues::splat(0.2),
            lambda: DEFAULT_LAMBDA,
            min_batches: DEFAULT_MIN_BATCHES,
        }
    }
}

impl ScoringConfig {
    pub fn check(&self) -> Result<(), ScoringError> {
        for (key, w) in self.weights.iter() {
            if !(0.0..=1.0).contains(&w) {
                return Err(ScoringError::InvalidConfig(format!(
                    "weight {key} = {w} is outside [0, 1]"
                )));
            }
        }
        let sum = self.weights.sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(ScoringError::WeightSum(sum));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(ScoringError::InvalidConfig(format!(
                "lambda = {} must be finite and non-negative",
                self.lambda
            )));
        }
        if self.min_batches == 0 {
            return Err(ScoringError::InvalidConfig(
                "min_batches must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSummary {
    pub means: ScoreVector,
    pub instabilities: DimValues,
    pub batch_count: usize,
    pub degraded: bool,
}

impl ScoreSummary {
    pub fn empty() -> Self {
        Self {
            means: ScoreVector::ZERO,
            instabilities: DimValues::ZERO,
            batch_count: 0,
            degraded: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoringError {
    #[error("duplicate batch_id `{0}`")]
    DuplicateBatchId(String),
    #[error("invalid batch `{batch_id}`: {reason}")]
    InvalidBatch { batch_id: String, reason: String },
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("invalid scoring configuration: {0}")]
    InvalidConfig(String),
}

/// Mean and sample standard deviation per dimension.
///
/// Values are sorted before accumulation so the result is bit-identical for
/// any ordering of `batches`. Standard deviation uses the `n - 1` divisor and
/// is 0 for fewer than two batches.
pub fn summarize_batches(
    batches: &[EvaluationBatch],
    config: &ScoringConfig,
) -> Result<ScoreSummary, ScoringError> {
    config.check()?;
    let mut seen = HashSet::new();
    for batch in batches {
        batch.check()?;
        if !seen.insert(batch.batch_id.as_str()) {
            return Err(ScoringError::DuplicateBatchId(batch.batch_id.clone()));
        }
    }

    let count = batches.len();
    let degraded = count < config.min_batches as usize;
    if count == 0 {
        return Ok(ScoreSummary::empty());
    }

    let mut means = DimValues::ZERO;
    let mut instabilities = DimValues::ZERO;
    for key in DimensionKey::ALL {
        let mut column: Vec<f64> = batches.iter().map(|b| b.scores[key]).collect();
        column.sort_by(f64::total_cmp);
        let (mean, m2) = welford(&column);
        // The mean of values in [0, 100] can drift past a bound by an ulp.
        means[key] = mean.clamp(0.0, 100.0);
        if count >= 2 {
            instabilities[key] = (m2 / (count - 1) as f64).sqrt();
        }
    }

    Ok(ScoreSummary {
        means: ScoreVector::try_from(means).expect("clamped means are in range"),
        instabilities,
        batch_count: count,
        degraded,
    })
}

/// Running mean and sum of squared deviations.
fn welford(values: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    (mean, m2.max(0.0))
}

/// `exp(-lambda * sigma)`; exactly 1 when either input is 0.
pub fn instability_penalty(sigma: f64, lambda: f64) -> f64 {
    (-lambda * sigma).exp()
}

/// Weighted, instability-penalized sum of the dimension means, before gating.
pub fn base_score(summary: &ScoreSummary, config: &ScoringConfig) -> f64 {
    let total: f64 = DimensionKey::ALL
        .iter()
        .map(|&k| {
            config.weights[k]
                * summary.means[k]
                * instability_penalty(summary.instabilities[k], config.lambda)
        })
        .sum();
    total.clamp(0.0, 100.0)
}

/// The readiness score: the base score if the veto gate passes at some
/// level, otherwise 0.
///
/// The gate factor only takes the values 0 and 1 and the weighted sum does
/// not depend on the level, so the maximum over levels reduces to this.
pub fn compute_prs(summary: &ScoreSummary, profile: &ThresholdProfile) -> f64 {
    let any_gate = profile
        .levels()
        .iter()
        .any(|row| crate::gating::gate_passes(&summary.means, row).passed);
    if any_gate {
        base_score(summary, &profile.scoring)
    } else {
        0.0
    }
}
