//! Prompt-asset package: manifest types, strict parsing, on-disk validation,
//! and the content fingerprint.
//!
//! An asset root holds `prompt_asset.json` plus every file the manifest
//! references. All references are relative paths that must stay inside the
//! root.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Component, Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::document::{self, DocumentError};

pub use crate::dimension::DimensionKey;

pub const MANIFEST_FILE: &str = "prompt_asset.json";
pub const MANIFEST_SCHEMA_VERSION: &str = "1";
pub const DEFAULT_EVIDENCE_DIR: &str = "evidence";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VersionId {
    pub asset_id: String,
    pub version: String,
}

impl VersionId {
    pub fn check(&self) -> Result<(), DocumentError> {
        if !is_valid_asset_id(&self.asset_id) {
            return Err(DocumentError::invalid(
                "id.asset_id",
                "1-64 chars of lowercase ASCII letters, digits or '-'",
            ));
        }
        if parse_semver(&self.version).is_none() {
            return Err(DocumentError::invalid("id.version", "MAJOR.MINOR.PATCH"));
        }
        Ok(())
    }
}

impl fmt::Display for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.asset_id, self.version)
    }
}

pub fn is_valid_asset_id(id: &str) -> bool {
    (1..=64).contains(&id.len())
        && id
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

/// Parses `MAJOR.MINOR.PATCH` with non-negative decimal components.
pub fn parse_semver(version: &str) -> Option<(u64, u64, u64)> {
    let mut parts = version.split('.');
    let mut next = || -> Option<u64> {
        let part = parts.next()?;
        if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        part.parse().ok()
    };
    let triple = (next()?, next()?, next()?);
    if parts.next().is_some() {
        return None;
    }
    Some(triple)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSpec {
    pub template_path: String,
    pub instructions: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub examples_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceSpec {
    pub input_schema_path: String,
    pub output_schema_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBinding {
    pub provider: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    /// Kept as written so integers stay integers in the canonical form.
    Number(serde_json::Number),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionContext {
    pub model_binding: ModelBinding,
    pub inference_parameters: BTreeMap<String, ParamValue>,
    pub tool_policies: Vec<String>,
    pub retrieval_policies: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssurancePackage {
    pub test_suite_path: String,
    pub acceptance_criteria: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Approval {
    pub approver: String,
    pub role: String,
    /// ISO 8601 calendar date, `YYYY-MM-DD`.
    pub date: String,
}

impl Approval {
    pub fn parsed_date(&self) -> Option<NaiveDate> {
        if self.date.len() != 10 {
            return None;
        }
        NaiveDate::parse_from_str(&self.date, "%Y-%m-%d").ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GovernanceMetadata {
    pub owner: String,
    pub approvals: Vec<Approval>,
    pub license: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ip_notes: Option<String>,
}

/// The six-part versioned asset package as stored in `prompt_asset.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptAssetManifest {
    pub schema_version: String,
    pub id: VersionId,
    pub prompt_spec: PromptSpec,
    pub interface: InterfaceSpec,
    pub execution_context: ExecutionContext,
    pub assurance: AssurancePackage,
    pub evidence_dir: String,
    pub governance: GovernanceMetadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claimed_prl: Option<u8>,
}

/// Parses and checks a manifest. Unknown fields anywhere are rejected.
pub fn parse_manifest(bytes: &[u8]) -> Result<PromptAssetManifest, DocumentError> {
    let manifest: PromptAssetManifest = document::parse_strict(bytes)?;
    manifest.check()?;
    Ok(manifest)
}

impl PromptAssetManifest {
    /// Value constraints that do not depend on the filesystem or the clock.
    pub fn check(&self) -> Result<(), DocumentError> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(DocumentError::invalid(
                "schema_version",
                format!("must be \"{MANIFEST_SCHEMA_VERSION}\""),
            ));
        }
        self.id.check()?;
        if let Some(level) = self.claimed_prl {
            if level > 9 {
                return Err(DocumentError::invalid("claimed_prl", "0..9"));
            }
        }

        let binding = &self.execution_context.model_binding;
        if binding.provider.trim().is_empty() {
            return Err(DocumentError::invalid(
                "execution_context.model_binding.provider",
                "non-empty",
            ));
        }
        if binding.model.trim().is_empty() {
            return Err(DocumentError::invalid(
                "execution_context.model_binding.model",
                "non-empty",
            ));
        }
        let params = &self.execution_context.inference_parameters;
        check_numeric_param(params, "temperature", "[0, 2]", |t| {
            (0.0..=2.0).contains(&t)
        })?;
        check_numeric_param(params, "top_p", "(0, 1]", |p| p > 0.0 && p <= 1.0)?;

        if self.assurance.acceptance_criteria.is_empty() {
            return Err(DocumentError::invalid(
                "assurance.acceptance_criteria",
                "at least one criterion",
            ));
        }
        if self
            .assurance
            .acceptance_criteria
            .iter()
            .any(|c| c.trim().is_empty())
        {
            return Err(DocumentError::invalid(
                "assurance.acceptance_criteria",
                "criteria must be non-empty",
            ));
        }

        if self.governance.owner.trim().is_empty() {
            return Err(DocumentError::invalid("governance.owner", "non-empty"));
        }
        for (i, approval) in self.governance.approvals.iter().enumerate() {
            if approval.parsed_date().is_none() {
                return Err(DocumentError::invalid(
                    format!("governance.approvals[{i}].date"),
                    "calendar date YYYY-MM-DD",
                ));
            }
        }
        Ok(())
    }

    /// Every file reference, as `(field name, path)`, in declaration order.
    pub fn file_references(&self) -> Vec<(&'static str, &str)> {
        let mut refs = vec![(
            "prompt_spec.template_path",
            self.prompt_spec.template_path.as_str(),
        )];
        if let Some(examples) = &self.prompt_spec.examples_path {
            refs.push(("prompt_spec.examples_path", examples.as_str()));
        }
        refs.push((
            "interface.input_schema_path",
            self.interface.input_schema_path.as_str(),
        ));
        refs.push((
            "interface.output_schema_path",
            self.interface.output_schema_path.as_str(),
        ));
        refs.push((
            "assurance.test_suite_path",
            self.assurance.test_suite_path.as_str(),
        ));
        refs
    }
}

fn check_numeric_param(
    params: &BTreeMap<String, ParamValue>,
    name: &str,
    range: &str,
    ok: impl Fn(f64) -> bool,
) -> Result<(), DocumentError> {
    let field = format!("execution_context.inference_parameters.{name}");
    match params.get(name) {
        None => Ok(()),
        Some(ParamValue::Number(v)) if v.as_f64().is_some_and(&ok) => Ok(()),
        Some(ParamValue::Number(_)) => Err(DocumentError::invalid(field, range)),
        Some(ParamValue::Text(_)) => Err(DocumentError::invalid(field, "must be a number")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathIssue {
    Empty,
    Absolute,
    Traversal,
}

impl fmt::Display for PathIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PathIssue::Empty => "path is empty",
            PathIssue::Absolute => "path is absolute",
            PathIssue::Traversal => "path contains a parent-directory component",
        })
    }
}

/// Normalizes a manifest-relative path to `/`-joined normal components,
/// rejecting anything that could leave the asset root lexically.
pub fn normalize_relative(path: &str) -> Result<String, PathIssue> {
    if path.is_empty() || path.contains('\0') {
        return Err(PathIssue::Empty);
    }
    // Backslash and drive prefixes are rejected on every platform so that a
    // manifest means the same thing everywhere.
    if path.starts_with('/') || path.starts_with('\\') || path.as_bytes().get(1) == Some(&b':') {
        return Err(PathIssue::Absolute);
    }
    let mut parts = Vec::new();
    for component in Path::new(&path.replace('\\', "/")).components() {
        match component {
            Component::Normal(part) => parts.push(part.to_string_lossy().into_owned()),
            Component::CurDir => {}
            Component::ParentDir => return Err(PathIssue::Traversal),
            Component::RootDir | Component::Prefix(_) => return Err(PathIssue::Absolute),
        }
    }
    if parts.is_empty() {
        return Err(PathIssue::Empty);
    }
    Ok(parts.join("/"))
}

/// Resolves `path` under `root`, following symlinks, and confirms the
/// result is still inside `root`. Returns `Ok(None)` if the target does not
/// exist.
pub fn resolve_inside(root: &Path, path: &str) -> Result<Option<PathBuf>, PathIssue> {
    let rel = normalize_relative(path)?;
    let joined = root.join(&rel);
    let Ok(real) = joined.canonicalize() else {
        return Ok(None);
    };
    let real_root = root.canonicalize().map_err(|_| PathIssue::Traversal)?;
    if real.starts_with(&real_root) {
        Ok(Some(real))
    } else {
        Err(PathIssue::Traversal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

/// Stable finding codes emitted by [`validate_asset`].
pub mod codes {
    pub const MISSING_FILE: &str = "MISSING_FILE";
    pub const PATH_ESCAPE: &str = "PATH_ESCAPE";
    pub const EMPTY_FILE: &str = "EMPTY_FILE";
    pub const NOT_A_FILE: &str = "NOT_A_FILE";
    pub const MALFORMED_SCHEMA: &str = "MALFORMED_SCHEMA";
    pub const FUTURE_APPROVAL: &str = "FUTURE_APPROVAL";
    pub const MISSING_EVIDENCE_DIR: &str = "MISSING_EVIDENCE_DIR";
    pub const NO_APPROVALS: &str = "NO_APPROVALS";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub code: String,
    pub location: String,
    pub message: String,
}

impl Finding {
    fn error(code: &str, location: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            code: code.to_string(),
            location: location.into(),
            message: message.into(),
        }
    }

    fn warning(code: &str, location: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            ..Self::error(code, location, message)
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}: {}",
            self.severity, self.code, self.location, self.message
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn error_count(&self) -> usize {
        self.count(Severity::Error)
    }

    pub fn warning_count(&self) -> usize {
        self.count(Severity::Warning)
    }

    pub fn is_valid(&self) -> bool {
        self.error_count() == 0
    }

    fn count(&self, severity: Severity) -> usize {
        self.findings
            .iter()
            .filter(|f| f.severity == severity)
            .count()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AssetError {
    #[error("asset root {path} is not readable: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("asset has {0} validation error(s); fingerprint requires a valid asset")]
    ValidationRequired(usize),
}

fn ensure_readable_root(root: &Path) -> Result<(), AssetError> {
    fs::read_dir(root)
        .map(|_| ())
        .map_err(|source| AssetError::Io {
            path: root.to_path_buf(),
            source,
        })
}

/// Checks the manifest against the files under `asset_root`.
///
/// `today` is the validation clock used for approval dates. Missing or
/// malformed files are reported as findings; only an unreadable root is an
/// error.
pub fn validate_asset(
    manifest: &PromptAssetManifest,
    asset_root: &Path,
    today: NaiveDate,
) -> Result<ValidationReport, AssetError> {
    ensure_readable_root(asset_root)?;
    let mut findings = check_references(manifest, asset_root);

    match resolve_inside(asset_root, &manifest.evidence_dir) {
        Err(issue) => findings.push(Finding::error(
            codes::PATH_ESCAPE,
            "evidence_dir",
            format!("{}: {issue}", manifest.evidence_dir),
        )),
        Ok(None) => findings.push(Finding::warning(
            codes::MISSING_EVIDENCE_DIR,
            "evidence_dir",
            format!("{}: directory not found", manifest.evidence_dir),
        )),
        Ok(Some(dir)) if !dir.is_dir() => findings.push(Finding::error(
            codes::NOT_A_FILE,
            "evidence_dir",
            format!("{}: not a directory", manifest.evidence_dir),
        )),
        Ok(Some(_)) => {}
    }

    if manifest.governance.approvals.is_empty() {
        findings.push(Finding::warning(
            codes::NO_APPROVALS,
            "governance.approvals",
            "no approvals recorded",
        ));
    }
    for (i, approval) in manifest.governance.approvals.iter().enumerate() {
        if let Some(date) = approval.parsed_date() {
            if date > today {
                findings.push(Finding::error(
                    codes::FUTURE_APPROVAL,
                    format!("governance.approvals[{i}].date"),
                    format!("{} is after the validation date {today}", approval.date),
                ));
            }
        }
    }

    Ok(ValidationReport { findings })
}

/// File-level checks shared by validation and fingerprinting.
fn check_references(manifest: &PromptAssetManifest, root: &Path) -> Vec<Finding> {
    let mut findings = Vec::new();
    for (field, path) in manifest.file_references() {
        let resolved = match resolve_inside(root, path) {
            Err(issue) => {
                findings.push(Finding::error(
                    codes::PATH_ESCAPE,
                    field,
                    format!("{path}: {issue}"),
                ));
                continue;
            }
            Ok(None) => {
                findings.push(Finding::error(
                    codes::MISSING_FILE,
                    field,
                    format!("{path}: file not found"),
                ));
                continue;
            }
            Ok(Some(p)) => p,
        };
        if !resolved.is_file() {
            findings.push(Finding::error(
                codes::NOT_A_FILE,
                field,
                format!("{path}: not a regular file"),
            ));
            continue;
        }
        let content = match fs::read(&resolved) {
            Ok(c) => c,
            Err(e) => {
                findings.push(Finding::error(
                    codes::MISSING_FILE,
                    field,
                    format!("{path}: {e}"),
                ));
                continue;
            }
        };
        match field {
            "prompt_spec.template_path" if content.iter().all(u8::is_ascii_whitespace) => {
                findings.push(Finding::error(
                    codes::EMPTY_FILE,
                    field,
                    format!("{path}: template is empty"),
                ));
            }
            "interface.input_schema_path" | "interface.output_schema_path" => {
                if let Err(e) = serde_json::from_slice::<serde_json::Value>(&content) {
                    findings.push(Finding::error(
                        codes::MALFORMED_SCHEMA,
                        field,
                        format!("{path}: not a JSON document ({e})"),
                    ));
                }
            }
            _ => {}
        }
    }
    findings
}

/// SHA-256 content digest of an asset, lowercase hex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssetFingerprint(pub String);

impl fmt::Display for AssetFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Builds the byte stream that [`asset_fingerprint`] hashes.
///
/// Layout: compact canonical manifest JSON, then for each distinct
/// referenced file in lexicographic order of its normalized path: path bytes,
/// `0x00`, the content length as u64 big-endian, the content.
pub fn fingerprint_stream(
    manifest: &PromptAssetManifest,
    asset_root: &Path,
) -> Result<Vec<u8>, AssetError> {
    ensure_readable_root(asset_root)?;
    let errors = check_references(manifest, asset_root)
        .iter()
        .filter(|f| f.severity == Severity::Error)
        .count();
    if errors > 0 {
        return Err(AssetError::ValidationRequired(errors));
    }

    let paths: BTreeSet<String> = manifest
        .file_references()
        .into_iter()
        .filter_map(|(_, p)| normalize_relative(p).ok())
        .collect();

    let mut stream = document::to_canonical_compact(manifest);
    for rel in paths {
        let content = fs::read(asset_root.join(&rel)).map_err(|source| AssetError::Io {
            path: asset_root.join(&rel),
            source,
        })?;
        stream.extend_from_slice(rel.as_bytes());
        stream.push(0);
        stream.extend_from_slice(&(content.len() as u64).to_be_bytes());
        stream.extend_from_slice(&content);
    }
    Ok(stream)
}

pub fn asset_fingerprint(
    manifest: &PromptAssetManifest,
    asset_root: &Path,
) -> Result<AssetFingerprint, AssetError> {
    let stream = fingerprint_stream(manifest, asset_root)?;
    Ok(AssetFingerprint(hex::encode(Sha256::digest(&stream))))
}
