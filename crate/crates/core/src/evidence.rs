//! Evidence packs: deliverable kinds, the per-level requirement matrix, the
//! evidence index, and integrity checks.
//!
//! Requirements are cumulative. A level is evidenced only when every kind
//! required at that level and at all lower levels is present.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::asset_model;
use crate::document::{self, DocumentError};
use crate::gating::LEVEL_COUNT;

pub const INDEX_FILE: &str = "evidence_index.json";
pub const DEFAULT_MATRIX_JSON: &str = include_str!("../data/default_matrix.json");

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EvidenceKind {
    SemanticScopeDocument,
    FeasibilityReport,
    StructuralBlueprint,
    InitialPromptVersion,
    ReasoningPathAnalysis,
    BehavioralValidationReport,
    QualitativeSuccessLogs,
    PerformanceBaselineReport,
    MetricMeasures,
    OptimizationMatrix,
    VarianceStabilityReport,
    TokenEfficiencyAnalysis,
    Custom(String),
}

impl EvidenceKind {
    /// The twelve built-in kinds, in level order.
    pub const BUILTIN: [EvidenceKind; 12] = [
        Self::SemanticScopeDocument,
        Self::FeasibilityReport,
        Self::StructuralBlueprint,
        Self::InitialPromptVersion,
        Self::ReasoningPathAnalysis,
        Self::BehavioralValidationReport,
        Self::QualitativeSuccessLogs,
        Self::PerformanceBaselineReport,
        Self::MetricMeasures,
        Self::OptimizationMatrix,
        Self::VarianceStabilityReport,
        Self::TokenEfficiencyAnalysis,
    ];

    pub fn custom(suffix: &str) -> Result<Self, String> {
        if suffix.is_empty()
            || !suffix
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
        {
            return Err(format!(
                "custom kind suffix `{suffix}` must be non-empty lowercase [a-z0-9_-]"
            ));
        }
        Ok(Self::Custom(suffix.to_string()))
    }

    fn builtin_name(&self) -> Option<&'static str> {
        Some(match self {
            Self::SemanticScopeDocument => "semantic_scope_document",
            Self::FeasibilityReport => "feasibility_report",
            Self::StructuralBlueprint => "structural_blueprint",
            Self::InitialPromptVersion => "initial_prompt_version",
            Self::ReasoningPathAnalysis => "reasoning_path_analysis",
            Self::BehavioralValidationReport => "behavioral_validation_report",
            Self::QualitativeSuccessLogs => "qualitative_success_logs",
            Self::PerformanceBaselineReport => "performance_baseline_report",
            Self::MetricMeasures => "metric_measures",
            Self::OptimizationMatrix => "optimization_matrix",
            Self::VarianceStabilityReport => "variance_stability_report",
            Self::TokenEfficiencyAnalysis => "token_efficiency_analysis",
            Self::Custom(_) => return None,
        })
    }
}

impl fmt::Display for EvidenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Custom(suffix) => write!(f, "custom:{suffix}"),
            builtin => f.write_str(builtin.builtin_name().expect("builtin kind")),
        }
    }
}

impl FromStr for EvidenceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(suffix) = s.strip_prefix("custom:") {
            return Self::custom(suffix);
        }
        Self::BUILTIN
            .iter()
            .find(|k| k.builtin_name() == Some(s))
            .cloned()
            .ok_or_else(|| format!("unknown evidence kind `{s}`"))
    }
}

impl Serialize for EvidenceKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EvidenceKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceEntry {
    pub kind: EvidenceKind,
    pub path: String,
    pub sha256: String,
    pub created: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Contents of `evidence/evidence_index.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceIndex {
    pub entries: Vec<EvidenceEntry>,
}

impl EvidenceIndex {
    pub fn parse(bytes: &[u8]) -> Result<Self, DocumentError> {
        let index: EvidenceIndex = document::parse_strict(bytes)?;
        index.check()?;
        Ok(index)
    }

    pub fn check(&self) -> Result<(), DocumentError> {
        let mut paths = HashSet::new();
        for (i, entry) in self.entries.iter().enumerate() {
            let normalized = asset_model::normalize_relative(&entry.path).map_err(|issue| {
                DocumentError::invalid(format!("entries[{i}].path"), issue.to_string())
            })?;
            if !paths.insert(normalized) {
                return Err(DocumentError::invalid(
                    format!("entries[{i}].path"),
                    format!("duplicate path {}", entry.path),
                ));
            }
            if !document::is_sha256_hex(&entry.sha256) {
                return Err(DocumentError::invalid(
                    format!("entries[{i}].sha256"),
                    "64 lowercase hex characters",
                ));
            }
        }
        Ok(())
    }

    pub fn kinds(&self) -> BTreeSet<EvidenceKind> {
        self.entries.iter().map(|e| e.kind.clone()).collect()
    }

    /// Adds or replaces the entry for `entry.path`.
    pub fn upsert(&mut self, entry: EvidenceEntry) -> Result<(), DocumentError> {
        let key = asset_model::normalize_relative(&entry.path)
            .map_err(|issue| DocumentError::invalid("path", issue.to_string()))?;
        self.entries.retain(|e| {
            asset_model::normalize_relative(&e.path).ok().as_deref() != Some(key.as_str())
        });
        self.entries.push(entry);
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        self.check()
    }

    /// A copy without the entries at the given paths.
    pub fn without_paths(&self, paths: &BTreeSet<String>) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .filter(|e| !paths.contains(&e.path))
                .cloned()
                .collect(),
        }
    }
}

/// Kinds required at each level, `rows()[n - 1]` being level `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequirementMatrix {
    rows: Vec<BTreeSet<EvidenceKind>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRow {
    n: u8,
    kinds: Vec<EvidenceKind>,
}

impl RequirementMatrix {
    pub fn new(rows: Vec<BTreeSet<EvidenceKind>>) -> Result<Self, DocumentError> {
        if rows.len() != LEVEL_COUNT as usize {
            return Err(DocumentError::invalid("levels", "exactly 9 rows"));
        }
        Ok(Self { rows })
    }

    /// The shipped matrix: built-in deliverables for levels 1-5 and one
    /// custom placeholder kind for each of levels 6-9.
    pub fn default_matrix() -> Self {
        Self::parse(DEFAULT_MATRIX_JSON.as_bytes()).expect("embedded matrix is valid")
    }

    /// Parses a JSON array of `{n, kinds}` rows for levels 1..9 in order.
    pub fn parse(bytes: &[u8]) -> Result<Self, DocumentError> {
        let rows: Vec<MatrixRow> = document::parse_strict(bytes)?;
        if rows.len() != LEVEL_COUNT as usize {
            return Err(DocumentError::invalid("matrix", "exactly 9 rows, n = 1..9"));
        }
        let mut sets = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            if row.n as usize != i + 1 {
                return Err(DocumentError::invalid(
                    format!("[{i}].n"),
                    format!("expected {}", i + 1),
                ));
            }
            sets.push(row.kinds.into_iter().collect());
        }
        Self::new(sets)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let rows: Vec<MatrixRow> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, kinds)| MatrixRow {
                n: i as u8 + 1,
                kinds: kinds.iter().cloned().collect(),
            })
            .collect();
        document::to_canonical_pretty(&rows)
    }

    pub fn rows(&self) -> &[BTreeSet<EvidenceKind>] {
        &self.rows
    }

    pub fn is_default(&self) -> bool {
        *self == Self::default_matrix()
    }
}

/// Union of the requirement sets for levels `1..=level`.
pub fn required_kinds(level: u8, matrix: &RequirementMatrix) -> BTreeSet<EvidenceKind> {
    matrix
        .rows
        .iter()
        .take(level as usize)
        .flat_map(|row| row.iter().cloned())
        .collect()
}

/// Highest level whose cumulative requirements are all present, or 0.
pub fn max_evidenced_level(index: &EvidenceIndex, matrix: &RequirementMatrix) -> u8 {
    let present = index.kinds();
    let mut level = 0;
    for (i, row) in matrix.rows.iter().enumerate() {
        // Cumulative requirements: the first unmet row bounds every later one.
        if !row.is_subset(&present) {
            break;
        }
        level = i as u8 + 1;
    }
    level
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelEvidenceStatus {
    pub level: u8,
    pub satisfied: bool,
    pub missing: Vec<String>,
}

/// Per-level view of which cumulative requirements are met.
pub fn level_status(index: &EvidenceIndex, matrix: &RequirementMatrix) -> Vec<LevelEvidenceStatus> {
    let present = index.kinds();
    (1..=LEVEL_COUNT)
        .map(|level| {
            let missing: Vec<String> = required_kinds(level, matrix)
                .difference(&present)
                .map(ToString::to_string)
                .collect();
            LevelEvidenceStatus {
                level,
                satisfied: missing.is_empty(),
                missing,
            }
        })
        .collect()
}

pub mod codes {
    pub const MISSING_FILE: &str = "MISSING_FILE";
    pub const DIGEST_MISMATCH: &str = "DIGEST_MISMATCH";
    pub const PATH_ESCAPE: &str = "PATH_ESCAPE";
    pub const INVALID_METRICS: &str = "INVALID_METRICS";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrityFinding {
    pub code: String,
    pub path: String,
    pub message: String,
}

impl fmt::Display for IntegrityFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error {} {}: {}", self.code, self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("evidence root {path} is not readable: {source}")]
pub struct EvidenceIoError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

/// Checks every entry's file against its recorded digest.
///
/// `metric_measures` files must additionally be a JSON object with numeric
/// `precision`, `recall` and `hallucination_rate` in `[0, 1]`.
pub fn verify_evidence_integrity(
    index: &EvidenceIndex,
    asset_root: &Path,
) -> Result<Vec<IntegrityFinding>, EvidenceIoError> {
    fs::read_dir(asset_root).map_err(|source| EvidenceIoError {
        path: asset_root.to_path_buf(),
        source,
    })?;

    let mut findings = Vec::new();
    for entry in &index.entries {
        let finding = |code: &str, message: String| IntegrityFinding {
            code: code.to_string(),
            path: entry.path.clone(),
            message,
        };
        let resolved = match asset_model::resolve_inside(asset_root, &entry.path) {
            Err(issue) => {
                findings.push(finding(codes::PATH_ESCAPE, issue.to_string()));
                continue;
            }
            Ok(None) => {
                findings.push(finding(codes::MISSING_FILE, "file not found".into()));
                continue;
            }
            Ok(Some(p)) => p,
        };
        let content = match fs::read(&resolved) {
            Ok(c) => c,
            Err(e) => {
                findings.push(finding(codes::MISSING_FILE, e.to_string()));
                continue;
            }
        };
        let actual = document::sha256_hex(&content);
        if actual != entry.sha256 {
            findings.push(finding(
                codes::DIGEST_MISMATCH,
                format!("expected {}, found {actual}", entry.sha256),
            ));
            continue;
        }
        if entry.kind == EvidenceKind::MetricMeasures {
            if let Err(reason) = check_metric_measures(&content) {
                findings.push(finding(codes::INVALID_METRICS, reason));
            }
        }
    }
    Ok(findings)
}

fn check_metric_measures(content: &[u8]) -> Result<(), String> {
    let value: serde_json::Value =
        serde_json::from_slice(content).map_err(|e| format!("not JSON: {e}"))?;
    let object = value.as_object().ok_or("not a JSON object")?;
    for field in ["precision", "recall", "hallucination_rate"] {
        match object.get(field).and_then(serde_json::Value::as_f64) {
            Some(v) if (0.0..=1.0).contains(&v) => {}
            Some(v) => return Err(format!("{field} = {v} is outside [0, 1]")),
            None => return Err(format!("missing numeric field {field}")),
        }
    }
    Ok(())
}
