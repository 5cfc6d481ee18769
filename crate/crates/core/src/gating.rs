//! Threshold profiles, the no-weak-link veto gate, and level assignment.

use serde::{Deserialize, Serialize};

use crate::dimension::{DimValues, DimensionKey, ScoreVector};
use crate::document::{self, DocumentError};
use crate::scoring::{self, ScoreSummary, ScoringConfig, ScoringError};

pub const LEVEL_COUNT: u8 = 9;

/// The shipped default profile, as written by `profile init`.
pub const CANONICAL_PROFILE_JSON: &str = include_str!("../data/canonical_profile.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelRow {
    pub n: u8,
    pub theta: f64,
    pub delta: ScoreVector,
}

/// Weights, penalty sensitivity and the nine `(theta, delta)` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileFile", into = "ProfileFile")]
pub struct ThresholdProfile {
    pub profile_id: String,
    pub canonical: bool,
    pub scoring: ScoringConfig,
    levels: Vec<LevelRow>,
}

/// On-disk layout of a profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    profile_id: String,
    canonical: bool,
    weights: DimValues,
    lambda: f64,
    min_batches: u32,
    levels: Vec<LevelRow>,
}

impl From<ThresholdProfile> for ProfileFile {
    fn from(p: ThresholdProfile) -> Self {
        Self {
            profile_id: p.profile_id,
            canonical: p.canonical,
            weights: p.scoring.weights,
            lambda: p.scoring.lambda,
            min_batches: p.scoring.min_batches,
            levels: p.levels,
        }
    }
}

impl TryFrom<ProfileFile> for ThresholdProfile {
    type Error = ProfileError;

    fn try_from(f: ProfileFile) -> Result<Self, ProfileError> {
        ThresholdProfile::new(
            f.profile_id,
            f.canonical,
            ScoringConfig {
                weights: f.weights,
                lambda: f.lambda,
                min_batches: f.min_batches,
            },
            f.levels,
        )
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error("thresholds decrease at level {level}{}", dimension.map(|d| format!(" for dimension {d}")).unwrap_or_default())]
    NonMonotoneThresholds {
        level: u8,
        dimension: Option<DimensionKey>,
    },
    #[error("weights sum to {0}, expected 1 (tolerance 1e-9)")]
    WeightSumViolation(f64),
    #[error("level {0} is missing")]
    MissingLevel(u8),
    #[error("profile is marked canonical but differs from the shipped canonical profile")]
    CanonicalMismatch,
}

impl From<ScoringError> for ProfileError {
    fn from(e: ScoringError) -> Self {
        match e {
            ScoringError::WeightSum(sum) => ProfileError::WeightSumViolation(sum),
            other => ProfileError::Document(DocumentError::invalid("scoring", other.to_string())),
        }
    }
}

impl ThresholdProfile {
    /// Builds a profile, enforcing range, completeness and monotonicity.
    pub fn new(
        profile_id: String,
        canonical: bool,
        scoring: ScoringConfig,
        levels: Vec<LevelRow>,
    ) -> Result<Self, ProfileError> {
        if profile_id.trim().is_empty() {
            return Err(DocumentError::invalid("profile_id", "non-empty").into());
        }
        scoring.check()?;

        for (i, row) in levels.iter().enumerate() {
            let expected = i as u8 + 1;
            if row.n != expected {
                if row.n > expected && row.n <= LEVEL_COUNT {
                    return Err(ProfileError::MissingLevel(expected));
                }
                return Err(DocumentError::invalid(
                    format!("levels[{i}].n"),
                    format!("expected {expected}; rows must be 1..9 in order"),
                )
                .into());
            }
            if !(0.0..=100.0).contains(&row.theta) {
                return Err(
                    DocumentError::invalid(format!("levels[{i}].theta"), "[0, 100]").into(),
                );
            }
        }
        if levels.len() < LEVEL_COUNT as usize {
            return Err(ProfileError::MissingLevel(levels.len() as u8 + 1));
        }

        for pair in levels.windows(2) {
            let (lower, upper) = (&pair[0], &pair[1]);
            if upper.theta < lower.theta {
                return Err(ProfileError::NonMonotoneThresholds {
                    level: upper.n,
                    dimension: None,
                });
            }
            for key in DimensionKey::ALL {
                if upper.delta[key] < lower.delta[key] {
                    return Err(ProfileError::NonMonotoneThresholds {
                        level: upper.n,
                        dimension: Some(key),
                    });
                }
            }
        }

        Ok(Self {
            profile_id,
            canonical,
            scoring,
            levels,
        })
    }

    /// The nine rows, `levels()[n - 1]` being level `n`.
    pub fn levels(&self) -> &[LevelRow] {
        &self.levels
    }

    pub fn row(&self, level: u8) -> Option<&LevelRow> {
        level
            .checked_sub(1)
            .and_then(|i| self.levels.get(i as usize))
    }

    /// The embedded canonical profile.
    pub fn canonical() -> Self {
        let file: ProfileFile = document::parse_strict(CANONICAL_PROFILE_JSON.as_bytes())
            .expect("embedded profile parses");
        ThresholdProfile::try_from(file).expect("embedded profile is valid")
    }

    /// Returns a copy with a new id, marked non-canonical.
    pub fn derived(&self, profile_id: impl Into<String>) -> Self {
        Self {
            profile_id: profile_id.into(),
            canonical: false,
            ..self.clone()
        }
    }

    /// Rebuilds the profile with changed parameters, re-running validation.
    pub fn modified(
        &self,
        scoring: ScoringConfig,
        levels: Vec<LevelRow>,
    ) -> Result<Self, ProfileError> {
        Self::new(self.profile_id.clone(), false, scoring, levels)
    }
}

/// Parses and validates a profile document.
///
/// A profile may only claim `canonical: true` if it is identical to the
/// shipped canonical profile.
pub fn load_profile(bytes: &[u8]) -> Result<ThresholdProfile, ProfileError> {
    let file: ProfileFile = document::parse_strict(bytes)?;
    let profile = ThresholdProfile::try_from(file)?;
    if profile.canonical && profile != ThresholdProfile::canonical() {
        return Err(ProfileError::CanonicalMismatch);
    }
    Ok(profile)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionShortfall {
    pub dimension: DimensionKey,
    pub score: f64,
    pub minimum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub level: u8,
    pub passed: bool,
    pub failing_dimensions: Vec<DimensionShortfall>,
}

/// Checks every dimension against the row's minima (inclusive).
pub fn gate_passes(scores: &ScoreVector, row: &LevelRow) -> GateOutcome {
    let failing_dimensions: Vec<_> = DimensionKey::ALL
        .iter()
        .filter(|&&k| scores[k] < row.delta[k])
        .map(|&k| DimensionShortfall {
            dimension: k,
            score: scores[k],
            minimum: row.delta[k],
        })
        .collect();
    GateOutcome {
        level: row.n,
        passed: failing_dimensions.is_empty(),
        failing_dimensions,
    }
}

/// Highest level whose global threshold and per-dimension minima are both
/// met, or 0.
pub fn determine_prl(prs: f64, scores: &ScoreVector, profile: &ThresholdProfile) -> u8 {
    profile
        .levels()
        .iter()
        .filter(|row| prs >= row.theta && gate_passes(scores, row).passed)
        .map(|row| row.n)
        .max()
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualificationResult {
    pub prs: f64,
    pub score_level: u8,
    pub evidence_level: u8,
    pub effective_level: u8,
    pub score_vector: ScoreVector,
    pub instabilities: DimValues,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub applied_row: Option<LevelRow>,
    pub degraded: bool,
    pub profile_id: String,
}

/// Scores the summary, assigns the score level, and caps it by the evidence
/// level.
pub fn qualify(
    summary: &ScoreSummary,
    profile: &ThresholdProfile,
    evidence_level: u8,
) -> QualificationResult {
    let prs = scoring::compute_prs(summary, profile);
    let score_level = determine_prl(prs, &summary.means, profile);
    let effective_level = score_level.min(evidence_level);
    QualificationResult {
        prs,
        score_level,
        evidence_level,
        effective_level,
        score_vector: summary.means,
        instabilities: summary.instabilities,
        applied_row: profile.row(effective_level).cloned(),
        degraded: summary.degraded,
        profile_id: profile.profile_id.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementFrontier {
    pub target: u8,
    pub deficits: DimValues,
    pub prs_deficit: f64,
}

impl ImprovementFrontier {
    pub fn is_met(&self) -> bool {
        self.prs_deficit == 0.0 && self.deficits.0.iter().all(|&d| d == 0.0)
    }
}

/// Score gaps between the summary and the target level's conditions.
///
/// # Panics
///
/// If `target` is not in `1..=9`.
pub fn improvement_frontier(
    summary: &ScoreSummary,
    profile: &ThresholdProfile,
    target: u8,
) -> ImprovementFrontier {
    let row = profile
        .row(target)
        .unwrap_or_else(|| panic!("target level {target} outside 1..=9"));
    let deficits = DimValues::from_fn(|k| (row.delta[k] - summary.means[k]).max(0.0));
    let prs_deficit = (row.theta - scoring::compute_prs(summary, profile)).max(0.0);
    ImprovementFrontier {
        target,
        deficits,
        prs_deficit,
    }
}
