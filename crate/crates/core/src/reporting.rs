//! Qualification tuples, conformance labels, and JSON/Markdown reports.

use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::asset_model::{self, ValidationReport};
use crate::dimension::{DimValues, DimensionKey, ScoreVector};
use crate::document::{self, DocumentError};
use crate::evidence::{IntegrityFinding, LevelEvidenceStatus};
use crate::gating::{LevelRow, QualificationResult, ThresholdProfile};

pub const FRAMEWORK_VERSION: &str = "PRL/PRS v1.0";
pub const REPORT_SCHEMA: &str = "1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Display form of a number: at most two decimals (ties to even on the exact
/// binary value), trailing zeros trimmed.
pub fn format_number(value: f64) -> String {
    let mut s = format!("{value:.2}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn format_list(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(format_number)
        .collect::<Vec<_>>()
        .join(", ")
}

/// `(PRL=n, PRS=x, S=(r, s, c, g, o), theta=t, delta=(...))`; the threshold
/// part is omitted at level 0.
pub fn render_tuple(result: &QualificationResult) -> String {
    let mut out = format!(
        "(PRL={}, PRS={}, S=({})",
        result.effective_level,
        format_number(result.prs),
        format_list(result.score_vector.values().0)
    );
    if let (true, Some(row)) = (result.effective_level > 0, &result.applied_row) {
        write!(
            out,
            ", theta={}, delta=({})",
            format_number(row.theta),
            format_list(row.delta.values().0)
        )
        .expect("write to string");
    }
    out.push(')');
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTuple {
    pub level: u8,
    pub prs: f64,
    pub scores: [f64; 5],
    pub threshold: Option<(f64, [f64; 5])>,
}

/// Parses the output of [`render_tuple`].
pub fn parse_tuple(text: &str) -> Result<ParsedTuple, String> {
    let inner = text
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or("tuple must be parenthesized")?;
    let rest = inner.strip_prefix("PRL=").ok_or("expected PRL=")?;
    let (level, rest) = rest.split_once(", PRS=").ok_or("expected PRS=")?;
    let level: u8 = level.parse().map_err(|e| format!("level: {e}"))?;
    let (prs, rest) = rest.split_once(", S=(").ok_or("expected S=(")?;
    let prs: f64 = prs.parse().map_err(|e| format!("PRS: {e}"))?;
    let (scores, rest) = rest.split_once(')').ok_or("unterminated S")?;
    let scores = parse_five(scores)?;
    let threshold = if rest.is_empty() {
        None
    } else {
        let rest = rest.strip_prefix(", theta=").ok_or("expected theta=")?;
        let (theta, rest) = rest.split_once(", delta=(").ok_or("expected delta=(")?;
        let theta: f64 = theta.parse().map_err(|e| format!("theta: {e}"))?;
        let delta = rest.strip_suffix(')').ok_or("unterminated delta")?;
        Some((theta, parse_five(delta)?))
    };
    Ok(ParsedTuple {
        level,
        prs,
        scores,
        threshold,
    })
}

fn parse_five(list: &str) -> Result<[f64; 5], String> {
    let values: Vec<f64> = list
        .split(", ")
        .map(|v| v.parse::<f64>().map_err(|e| format!("`{v}`: {e}")))
        .collect::<Result<_, _>>()?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 5 values, found {}", v.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    PrlConformant,
    PrlCompatible,
    Unlabeled,
}

impl LabelKind {
    pub fn display_name(self) -> &'static str {
        match self {
            LabelKind::PrlConformant => "PRL-Conformant",
            LabelKind::PrlCompatible => "PRL-Compatible",
            LabelKind::Unlabeled => "Unlabeled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConformanceLabel {
    pub kind: LabelKind,
    pub cited_version: String,
}

/// Conformant only with the canonical profile, the default matrix, and no
/// deviations. Any documented deviation yields Compatible. Undocumented
/// departures from the defaults leave the result unlabeled.
pub fn determine_label(
    profile: &ThresholdProfile,
    matrix_is_default: bool,
    deviations: &[String],
) -> ConformanceLabel {
    let kind = if !deviations.is_empty() {
        LabelKind::PrlCompatible
    } else if profile.canonical && matrix_is_default {
        LabelKind::PrlConformant
    } else {
        LabelKind::Unlabeled
    };
    ConformanceLabel {
        kind,
        cited_version: FRAMEWORK_VERSION.to_string(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FindingCounts {
    pub errors: usize,
    pub warnings: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    pub counts: FindingCounts,
    pub items: Vec<asset_model::Finding>,
}

impl From<&ValidationReport> for ValidationSection {
    fn from(report: &ValidationReport) -> Self {
        Self {
            counts: FindingCounts {
                errors: report.error_count(),
                warnings: report.warning_count(),
            },
            items: report.findings.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceSection {
    pub counts: FindingCounts,
    pub items: Vec<IntegrityFinding>,
    pub levels: Vec<LevelEvidenceStatus>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFindings {
    pub validation: ValidationSection,
    pub evidence: EvidenceSection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformanceReport {
    pub result: QualificationResult,
    pub label: ConformanceLabel,
    pub deviations: Vec<String>,
    pub findings: ReportFindings,
    pub generated_at: DateTime<Utc>,
    pub tool_version: String,
}

/// The JSON report layout. The applied threshold row is carried by the
/// `tuple` field and recovered from it when a report is re-read.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportJson {
    report_schema: String,
    generated_at: DateTime<Utc>,
    tool_version: String,
    tuple: String,
    prs: f64,
    score_level: u8,
    evidence_level: u8,
    effective_level: u8,
    scores: ScoreVector,
    instabilities: DimValues,
    degraded: bool,
    profile_id: String,
    label: ConformanceLabel,
    deviations: Vec<String>,
    findings: ReportFindings,
}

impl ConformanceReport {
    pub fn new(
        result: QualificationResult,
        label: ConformanceLabel,
        deviations: Vec<String>,
        findings: ReportFindings,
        generated_at: DateTime<Utc>,
    ) -> Self {
        Self {
            result,
            label,
            deviations,
            findings,
            generated_at,
            tool_version: TOOL_VERSION.to_string(),
        }
    }

    fn to_json_layout(&self) -> ReportJson {
        ReportJson {
            report_schema: REPORT_SCHEMA.to_string(),
            generated_at: self.generated_at,
            tool_version: self.tool_version.clone(),
            tuple: render_tuple(&self.result),
            prs: self.result.prs,
            score_level: self.result.score_level,
            evidence_level: self.result.evidence_level,
            effective_level: self.result.effective_level,
            scores: self.result.score_vector,
            instabilities: self.result.instabilities,
            degraded: self.result.degraded,
            profile_id: self.result.profile_id.clone(),
            label: self.label.clone(),
            deviations: self.deviations.clone(),
            findings: self.findings.clone(),
        }
    }

    /// Reads a JSON report produced by [`render_report`].
    pub fn parse_json(bytes: &[u8]) -> Result<Self, DocumentError> {
        let json: ReportJson = document::parse_strict(bytes)?;
        if json.report_schema != REPORT_SCHEMA {
            return Err(DocumentError::invalid(
                "report_schema",
                format!("unsupported schema, expected \"{REPORT_SCHEMA}\""),
            ));
        }
        let parsed = parse_tuple(&json.tuple).map_err(|e| DocumentError::invalid("tuple", e))?;
        let applied_row = match parsed.threshold {
            Some((theta, delta)) => Some(LevelRow {
                n: json.effective_level,
                theta,
                delta: ScoreVector::new(delta)
                    .map_err(|e| DocumentError::invalid("tuple", e.to_string()))?,
            }),
            None => None,
        };
        Ok(Self {
            result: QualificationResult {
                prs: json.prs,
                score_level: json.score_level,
                evidence_level: json.evidence_level,
                effective_level: json.effective_level,
                score_vector: json.scores,
                instabilities: json.instabilities,
                applied_row,
                degraded: json.degraded,
                profile_id: json.profile_id,
            },
            label: json.label,
            deviations: json.deviations,
            findings: json.findings,
            generated_at: json.generated_at,
            tool_version: json.tool_version,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

pub fn render_report(report: &ConformanceReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => document::to_canonical_pretty(&report.to_json_layout()),
        ReportFormat::Markdown => render_markdown(report).into_bytes(),
    }
}

pub fn attribution_line(tool_version: &str) -> String {
    format!(
        "Qualified against the {FRAMEWORK_VERSION} readiness framework (canonical specification, CC BY 4.0); generated by prl {tool_version}."
    )
}

fn render_markdown(report: &ConformanceReport) -> String {
    let r = &report.result;
    let mut md = String::new();
    let w = &mut md;
    // Writing into a String cannot fail.
    let _ = writeln!(w, "# Prompt readiness qualification\n");
    let _ = writeln!(w, "`{}`\n", render_tuple(r));
    let _ = writeln!(w, "- Effective level: {}", r.effective_level);
    let _ = writeln!(w, "- Score level: {}", r.score_level);
    let _ = writeln!(w, "- Evidence level: {}", r.evidence_level);
    let _ = writeln!(w, "- PRS: {}", format_number(r.prs));
    let _ = writeln!(w, "- Profile: {}", r.profile_id);
    let _ = writeln!(w, "- Generated at: {}", report.generated_at.to_rfc3339());
    if r.degraded {
        let _ = writeln!(
            w,
            "- Degraded: fewer evaluation batches than the profile minimum"
        );
    }

    let _ = writeln!(w, "\n## Dimensions\n");
    let _ = writeln!(w, "| Dimension | Score | σ | Minimum | Margin |");
    let _ = writeln!(w, "|---|---|---|---|---|");
    for key in DimensionKey::ALL {
        let score = r.score_vector[key];
        let (minimum, margin) = match (&r.applied_row, r.effective_level) {
            (Some(row), level) if level > 0 => (
                format_number(row.delta[key]),
                format_number(score - row.delta[key]),
            ),
            _ => ("-".to_string(), "-".to_string()),
        };
        let _ = writeln!(
            w,
            "| {} ({}) | {} | {} | {} | {} |",
            key,
            key.description(),
            format_number(score),
            format_number(r.instabilities[key]),
            minimum,
            margin
        );
    }

    let _ = writeln!(w, "\n## Evidence\n");
    let evidence = &report.findings.evidence;
    if evidence.levels.is_empty() {
        let _ = writeln!(w, "No evidence status recorded.");
    } else {
        let _ = writeln!(w, "| Level | Status | Missing |");
        let _ = writeln!(w, "|---|---|---|");
        for status in &evidence.levels {
            let missing = if status.missing.is_empty() {
                "-".to_string()
            } else {
                status.missing.join(", ")
            };
            let _ = writeln!(
                w,
                "| {} | {} | {} |",
                status.level,
                if status.satisfied {
                    "satisfied"
                } else {
                    "missing"
                },
                missing
            );
        }
    }
    let _ = writeln!(
        w,
        "\nIntegrity: {} error(s), {} warning(s).",
        evidence.counts.errors, evidence.counts.warnings
    );
    for item in &evidence.items {
        let _ = writeln!(w, "- {item}");
    }
    let validation = &report.findings.validation;
    let _ = writeln!(
        w,
        "Validation: {} error(s), {} warning(s).",
        validation.counts.errors, validation.counts.warnings
    );
    for item in &validation.items {
        let _ = writeln!(w, "- {item}");
    }

    let _ = writeln!(w, "\n## Conformance\n");
    let _ = writeln!(
        w,
        "Label: **{}** ({})",
        report.label.kind.display_name(),
        report.label.cited_version
    );
    if !report.deviations.is_empty() {
        let _ = writeln!(w, "\nDeviations:\n");
        for deviation in &report.deviations {
            let _ = writeln!(w, "- {deviation}");
        }
    }
    let _ = writeln!(w, "\n{}", attribution_line(&report.tool_version));
    md
}
