//! The `prl` command line.
//!
//! Exit codes: 0 success or gate pass, 1 gate fail, 2 validation error
//! (manifest, profile, evidence or usage), 3 I/O or environment error.
//! Machine-readable output goes to stdout and diagnostics to stderr.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::asset_model::{self, PromptAssetManifest, ValidationReport, MANIFEST_FILE};
use crate::dimension::{DimValues, DimensionKey};
use crate::document;
use crate::evidence::{self, EvidenceEntry, EvidenceIndex, EvidenceKind, RequirementMatrix};
use crate::gating::{self, LevelRow, QualificationResult, ThresholdProfile};
use crate::registry::{self, RecordDraft, Registry, RegistryError, WriterLock};
use crate::reporting::{
    self, ConformanceReport, EvidenceSection, FindingCounts, ReportFindings, ReportFormat,
    ValidationSection,
};
use crate::scoring::{self, EvaluationBatch, ScoreSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ExitCode {
    Success = 0,
    GateFail = 1,
    ValidationError = 2,
    IoError = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Markdown,
    Tuple,
}

#[derive(Debug, Parser)]
#[command(
    name = "prl",
    version,
    about = "Readiness-level qualification for versioned prompt assets"
)]
pub struct Cli {
    /// Threshold profile JSON (default: the embedded canonical profile).
    #[arg(long, global = true, env = "PRL_PROFILE")]
    profile: Option<PathBuf>,
    /// Evidence requirement matrix JSON (default: the embedded matrix).
    #[arg(long, global = true)]
    matrix: Option<PathBuf>,
    /// Clock override (RFC 3339) for reproducible reports and records.
    #[arg(long, global = true, value_parser = parse_timestamp)]
    now: Option<DateTime<Utc>>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
    /// Registry directory holding records.jsonl.
    #[arg(long, global = true, default_value = "registry")]
    registry: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scaffold an asset skeleton.
    Init(InitArgs),
    /// Validate an asset directory.
    Validate { asset_root: PathBuf },
    /// Summarize evaluation batches.
    Score { asset_root: PathBuf },
    /// Qualify an asset and emit a report.
    Qualify(QualifyArgs),
    /// Exit 0 iff the asset reaches the target level.
    Gate(GateArgs),
    /// Sweep one parameter and tabulate PRS and score level.
    Whatif(WhatifArgs),
    /// Re-render a stored JSON report.
    Report { report: PathBuf },
    /// Inspect or verify the qualification registry.
    #[command(subcommand)]
    Registry(RegistryCommand),
    /// Write or check threshold profiles.
    #[command(subcommand)]
    Profile(ProfileCommand),
    /// Maintain an asset's evidence index.
    #[command(subcommand)]
    Evidence(EvidenceCommand),
}

#[derive(Debug, Args)]
struct InitArgs {
    dir: PathBuf,
    #[arg(long)]
    asset_id: Option<String>,
    #[arg(long, default_value = "0.1.0")]
    asset_version: String,
    #[arg(long, default_value = "unassigned")]
    owner: String,
}

#[derive(Debug, Args)]
struct QualifyArgs {
    asset_root: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Append the result to the registry.
    #[arg(long)]
    record: bool,
    /// Documented deviation from the canonical profile or matrix (repeatable).
    #[arg(long = "deviation")]
    deviations: Vec<String>,
}

#[derive(Debug, Args)]
struct GateArgs {
    asset_root: PathBuf,
    /// Target level; defaults to the manifest's claimed_prl.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=9))]
    target: Option<u8>,
}

#[derive(Debug, Args)]
struct WhatifArgs {
    asset_root: PathBuf,
    /// PARAM=START:END:STEPS with PARAM one of lambda, weight.<D>, theta,
    /// delta, delta.<D>; theta/delta values are offsets.
    #[arg(long)]
    sweep: String,
}

#[derive(Debug, Subcommand)]
enum RegistryCommand {
    /// All records in sequence order.
    List,
    /// Records for one asset.
    History { asset_id: String },
    /// Check hashes, links and sequence numbers.
    Verify,
}

#[derive(Debug, Subcommand)]
enum ProfileCommand {
    /// Write the canonical profile to PATH (or stdout).
    Init {
        path: Option<PathBuf>,
    },
    Validate {
        path: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum EvidenceCommand {
    /// Hash a file and add it to the evidence index.
    Add {
        asset_root: PathBuf,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        path: String,
        #[arg(long)]
        note: Option<String>,
    },
    Verify {
        asset_root: PathBuf,
    },
    Status {
        asset_root: PathBuf,
    },
}

fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("expected an RFC 3339 timestamp: {e}"))
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    fn validation(message: impl fmt::Display) -> Self {
        Self {
            code: ExitCode::ValidationError,
            message: message.to_string(),
        }
    }

    fn io(message: impl fmt::Display) -> Self {
        Self {
            code: ExitCode::IoError,
            message: message.to_string(),
        }
    }
}

impl From<RegistryError> for CliError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::ChainCorrupt(_) => CliError::validation(e),
            RegistryError::LockHeld(_) | RegistryError::Io { .. } => CliError::io(e),
        }
    }
}

type CliResult = Result<ExitCode, CliError>;

/// Parses `args` and runs the command, writing to the given streams.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                ExitCode::ValidationError
            } else {
                let _ = write!(out, "{rendered}");
                ExitCode::Success
            };
        }
    };
    let mut ctx = Context {
        cli: &cli,
        out,
        err,
    };
    match ctx.dispatch() {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(ctx.err, "error: {}", e.message);
            e.code
        }
    }
}

struct Context<'a> {
    cli: &'a Cli,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

/// Everything the qualification pipeline produces for one asset.
struct Qualified {
    manifest: PromptAssetManifest,
    validation: ValidationReport,
    profile: ThresholdProfile,
    matrix: RequirementMatrix,
    summary: ScoreSummary,
    evidence: EvidenceState,
    result: QualificationResult,
}

struct EvidenceState {
    findings: Vec<evidence::IntegrityFinding>,
    level: u8,
    statuses: Vec<evidence::LevelEvidenceStatus>,
}

impl<'a> Context<'a> {
    fn dispatch(&mut self) -> CliResult {
        match &self.cli.command {
            Command::Init(args) => self.cmd_init(args),
            Command::Validate { asset_root } => self.cmd_validate(asset_root),
            Command::Score { asset_root } => self.cmd_score(asset_root),
            Command::Qualify(args) => self.cmd_qualify(args),
            Command::Gate(args) => self.cmd_gate(args),
            Command::Whatif(args) => self.cmd_whatif(args),
            Command::Report { report } => self.cmd_report(report),
            Command::Registry(cmd) => self.cmd_registry(cmd),
            Command::Profile(cmd) => self.cmd_profile(cmd),
            Command::Evidence(cmd) => self.cmd_evidence(cmd),
        }
    }

    fn now(&self) -> DateTime<Utc> {
        self.cli.now.unwrap_or_else(Utc::now)
    }

    fn today(&self) -> NaiveDate {
        self.now().date_naive()
    }

    fn emit(&mut self, bytes: &[u8]) -> Result<(), CliError> {
        self.out
            .write_all(bytes)
            .map_err(|e| CliError::io(format!("writing output: {e}")))
    }

    fn diag(&mut self, line: impl fmt::Display) {
        let _ = writeln!(self.err, "{line}");
    }

    // ---- shared pipeline ----

    fn load_manifest(&mut self, root: &Path) -> Result<PromptAssetManifest, CliError> {
        fs::read_dir(root).map_err(|e| {
            CliError::io(format!(
                "asset root {} is not readable: {e}",
                root.display()
            ))
        })?;
        let path = root.join(MANIFEST_FILE);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(CliError::validation(format!(
                    "{} not found",
                    path.display()
                )))
            }
            Err(e) => return Err(CliError::io(format!("reading {}: {e}", path.display()))),
        };
        asset_model::parse_manifest(&bytes)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }

    /// Parses and validates; error findings stop the pipeline with exit 2.
    fn load_valid_asset(
        &mut self,
        root: &Path,
    ) -> Result<(PromptAssetManifest, ValidationReport), CliError> {
        let manifest = self.load_manifest(root)?;
        let report =
            asset_model::validate_asset(&manifest, root, self.today()).map_err(CliError::io)?;
        if !report.is_valid() {
            for finding in &report.findings {
                self.diag(finding);
            }
            return Err(CliError::validation(format!(
                "asset {} has {} validation error(s)",
                manifest.id,
                report.error_count()
            )));
        }
        for finding in &report.findings {
            self.diag(finding);
        }
        Ok((manifest, report))
    }

    fn load_profile(&self) -> Result<ThresholdProfile, CliError> {
        match &self.cli.profile {
            None => Ok(ThresholdProfile::canonical()),
            Some(path) => {
                let bytes = fs::read(path).map_err(|e| {
                    CliError::io(format!("reading profile {}: {e}", path.display()))
                })?;
                gating::load_profile(&bytes)
                    .map_err(|e| CliError::validation(format!("profile {}: {e}", path.display())))
            }
        }
    }

    fn load_matrix(&self) -> Result<RequirementMatrix, CliError> {
        match &self.cli.matrix {
            None => Ok(RequirementMatrix::default_matrix()),
            Some(path) => {
                let bytes = fs::read(path)
                    .map_err(|e| CliError::io(format!("reading matrix {}: {e}", path.display())))?;
                RequirementMatrix::parse(&bytes)
                    .map_err(|e| CliError::validation(format!("matrix {}: {e}", path.display())))
            }
        }
    }

    fn load_summary(
        &self,
        root: &Path,
        manifest: &PromptAssetManifest,
        profile: &ThresholdProfile,
    ) -> Result<ScoreSummary, CliError> {
        let batches = load_batches(&root.join(&manifest.evidence_dir).join("batches"))?;
        scoring::summarize_batches(&batches, &profile.scoring).map_err(CliError::validation)
    }

    fn load_evidence(
        &mut self,
        root: &Path,
        manifest: &PromptAssetManifest,
        matrix: &RequirementMatrix,
    ) -> Result<EvidenceState, CliError> {
        let index = read_index(&index_path(root, manifest))?;
        let findings = evidence::verify_evidence_integrity(&index, root).map_err(CliError::io)?;
        for finding in &findings {
            self.diag(finding);
        }
        // Entries that fail integrity checks cannot support a level.
        let failed: BTreeSet<String> = findings.iter().map(|f| f.path.clone()).collect();
        let trusted = index.without_paths(&failed);
        Ok(EvidenceState {
            level: evidence::max_evidenced_level(&trusted, matrix),
            statuses: evidence::level_status(&trusted, matrix),
            findings,
        })
    }

    fn qualify_asset(&mut self, root: &Path) -> Result<Qualified, CliError> {
        let (manifest, validation) = self.load_valid_asset(root)?;
        let profile = self.load_profile()?;
        let matrix = self.load_matrix()?;
        let summary = self.load_summary(root, &manifest, &profile)?;
        if summary.degraded {
            self.diag(format!(
                "warning: {} batch(es), fewer than min_batches = {}; instability is under-sampled",
                summary.batch_count, profile.scoring.min_batches
            ));
        }
        let evidence = self.load_evidence(root, &manifest, &matrix)?;
        let result = gating::qualify(&summary, &profile, evidence.level);
        Ok(Qualified {
            manifest,
            validation,
            profile,
            matrix,
            summary,
            evidence,
            result,
        })
    }

    fn build_report(&self, q: &Qualified, deviations: &[String]) -> ConformanceReport {
        let label = reporting::determine_label(&q.profile, q.matrix.is_default(), deviations);
        let findings = ReportFindings {
            validation: ValidationSection::from(&q.validation),
            evidence: EvidenceSection {
                counts: FindingCounts {
                    errors: q.evidence.findings.len(),
                    warnings: 0,
                },
                items: q.evidence.findings.clone(),
                levels: q.evidence.statuses.clone(),
            },
        };
        ConformanceReport::new(
            q.result.clone(),
            label,
            deviations.to_vec(),
            findings,
            self.now(),
        )
    }

    fn render(&self, report: &ConformanceReport) -> Vec<u8> {
        match self.cli.format {
            OutputFormat::Json => reporting::render_report(report, ReportFormat::Json),
            OutputFormat::Markdown => reporting::render_report(report, ReportFormat::Markdown),
            OutputFormat::Tuple => {
                format!("{}\n", reporting::render_tuple(&report.result)).into_bytes()
            }
        }
    }

    // ---- commands ----

    fn cmd_init(&mut self, args: &InitArgs) -> CliResult {
        let asset_id = match &args.asset_id {
            Some(id) => id.clone(),
            None => default_asset_id(&args.dir),
        };
        let manifest = scaffold_manifest(&asset_id, &args.asset_version, &args.owner);
        manifest.check().map_err(CliError::validation)?;
        if args.dir.join(MANIFEST_FILE).exists() {
            return Err(CliError::validation(format!(
                "{} already exists",
                args.dir.join(MANIFEST_FILE).display()
            )));
        }
        write_scaffold(&args.dir, &manifest)
            .map_err(|e| CliError::io(format!("scaffolding {}: {e}", args.dir.display())))?;
        self.diag(format!(
            "initialized {} in {}",
            manifest.id,
            args.dir.display()
        ));
        Ok(ExitCode::Success)
    }

    fn cmd_validate(&mut self, root: &Path) -> CliResult {
        let manifest = self.load_manifest(root)?;
        let report =
            asset_model::validate_asset(&manifest, root, self.today()).map_err(CliError::io)?;
        for finding in &report.findings {
            let line = format!("{finding}\n");
            self.emit(line.as_bytes())?;
        }
        let summary = format!(
            "{}: {} error(s), {} warning(s)\n",
            manifest.id,
            report.error_count(),
            report.warning_count()
        );
        self.emit(summary.as_bytes())?;
        Ok(if report.is_valid() {
            ExitCode::Success
        } else {
            ExitCode::ValidationError
        })
    }

    fn cmd_score(&mut self, root: &Path) -> CliResult {
        let (manifest, _) = self.load_valid_asset(root)?;
        let profile = self.load_profile()?;
        let summary = self.load_summary(root, &manifest, &profile)?;
        #[derive(Serialize)]
        struct ScoreOutput<'s> {
            summary: &'s ScoreSummary,
            base_score: f64,
            prs: f64,
            profile_id: &'s str,
        }
        let output = ScoreOutput {
            summary: &summary,
            base_score: scoring::base_score(&summary, &profile.scoring),
            prs: scoring::compute_prs(&summary, &profile),
            profile_id: &profile.profile_id,
        };
        let bytes = match self.cli.format {
            OutputFormat::Json => document::to_canonical_pretty(&output),
            _ => {
                let mut text = String::new();
                for key in DimensionKey::ALL {
                    text.push_str(&format!(
                        "{key}\tmean={}\tsigma={}\n",
                        reporting::format_number(summary.means[key]),
                        reporting::format_number(summary.instabilities[key])
                    ));
                }
                text.push_str(&format!(
                    "batches={} degraded={} base={} prs={}\n",
                    summary.batch_count,
                    summary.degraded,
                    reporting::format_number(output.base_score),
                    reporting::format_number(output.prs)
                ));
                text.into_bytes()
            }
        };
        self.emit(&bytes)?;
        Ok(ExitCode::Success)
    }

    fn cmd_qualify(&mut self, args: &QualifyArgs) -> CliResult {
        let q = self.qualify_asset(&args.asset_root)?;
        let report = self.build_report(&q, &args.deviations);

        if args.record {
            let fingerprint = asset_model::asset_fingerprint(&q.manifest, &args.asset_root)
                .map_err(CliError::validation)?;
            let record = Registry::new(&self.cli.registry).append(
                RecordDraft {
                    asset_id: q.manifest.id.asset_id.clone(),
                    version: q.manifest.id.version.clone(),
                    fingerprint,
                    result: q.result.clone(),
                    profile_id: q.profile.profile_id.clone(),
                },
                self.now(),
            )?;
            self.diag(format!(
                "recorded seq {} ({})",
                record.record_seq, record.record_hash
            ));
        }

        let bytes = self.render(&report);
        match &args.out {
            Some(path) => fs::write(path, &bytes)
                .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))?,
            None => self.emit(&bytes)?,
        }
        Ok(ExitCode::Success)
    }

    fn cmd_gate(&mut self, args: &GateArgs) -> CliResult {
        let manifest = self.load_manifest(&args.asset_root)?;
        let target = match (args.target, manifest.claimed_prl) {
            (Some(t), _) => t,
            (None, Some(claimed)) if claimed >= 1 => claimed,
            _ => {
                return Err(CliError::validation(
                    "gate needs --target (the manifest has no claimed_prl in 1..9)",
                ))
            }
        };
        let q = self.qualify_asset(&args.asset_root)?;
        let passed = q.result.effective_level >= target;
        let frontier = gating::improvement_frontier(&q.summary, &q.profile, target);
        let missing_evidence: Vec<String> = q
            .evidence
            .statuses
            .get(target as usize - 1)
            .map(|s| s.missing.clone())
            .unwrap_or_default();
        let tuple = reporting::render_tuple(&q.result);

        let bytes = match self.cli.format {
            OutputFormat::Json => {
                #[derive(Serialize)]
                struct GateOutput<'g> {
                    tuple: &'g str,
                    target: u8,
                    passed: bool,
                    effective_level: u8,
                    score_level: u8,
                    evidence_level: u8,
                    #[serde(skip_serializing_if = "Option::is_none")]
                    frontier: Option<&'g gating::ImprovementFrontier>,
                    #[serde(skip_serializing_if = "Vec::is_empty")]
                    missing_evidence: Vec<String>,
                }
                document::to_canonical_pretty(&GateOutput {
                    tuple: &tuple,
                    target,
                    passed,
                    effective_level: q.result.effective_level,
                    score_level: q.result.score_level,
                    evidence_level: q.result.evidence_level,
                    frontier: (!passed).then_some(&frontier),
                    missing_evidence: if passed { Vec::new() } else { missing_evidence },
                })
            }
            _ => {
                let mut text = format!("{tuple}\n");
                if passed {
                    text.push_str(&format!(
                        "gate PASS: level {} >= target {target}\n",
                        q.result.effective_level
                    ));
                } else {
                    text.push_str(&format!(
                        "gate FAIL: level {} < target {target}\n",
                        q.result.effective_level
                    ));
                    text.push_str(&render_frontier(&frontier));
                    for kind in &missing_evidence {
                        text.push_str(&format!("missing evidence: {kind}\n"));
                    }
                }
                text.into_bytes()
            }
        };
        self.emit(&bytes)?;
        Ok(if passed {
            ExitCode::Success
        } else {
            ExitCode::GateFail
        })
    }

    fn cmd_whatif(&mut self, args: &WhatifArgs) -> CliResult {
        let sweep = Sweep::parse(&args.sweep)
            .map_err(|e| CliError::validation(format!("invalid sweep: {e}")))?;
        let (manifest, _) = self.load_valid_asset(&args.asset_root)?;
        let profile = self.load_profile()?;
        let summary = self.load_summary(&args.asset_root, &manifest, &profile)?;
        let rows = sweep
            .run(&summary, &profile)
            .map_err(|e| CliError::validation(format!("invalid sweep: {e}")))?;

        let bytes = match self.cli.format {
            OutputFormat::Json => {
                #[derive(Serialize)]
                struct WhatifOutput<'w> {
                    parameter: &'w str,
                    rows: &'w [SweepRow],
                }
                document::to_canonical_pretty(&WhatifOutput {
                    parameter: &sweep.parameter.to_string(),
                    rows: &rows,
                })
            }
            OutputFormat::Markdown => {
                let mut text = format!(
                    "| {} | PRS | score level |\n|---|---|---|\n",
                    sweep.parameter
                );
                for row in &rows {
                    text.push_str(&format!(
                        "| {} | {} | {} |\n",
                        format_sweep_value(row.value),
                        reporting::format_number(row.prs),
                        row.score_level
                    ));
                }
                text.into_bytes()
            }
            OutputFormat::Tuple => {
                let mut text = format!("{}\tPRS\tlevel\n", sweep.parameter);
                for row in &rows {
                    text.push_str(&format!(
                        "{}\t{}\t{}\n",
                        format_sweep_value(row.value),
                        reporting::format_number(row.prs),
                        row.score_level
                    ));
                }
                text.into_bytes()
            }
        };
        self.emit(&bytes)?;
        Ok(ExitCode::Success)
    }

    fn cmd_report(&mut self, path: &Path) -> CliResult {
        let bytes =
            fs::read(path).map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))?;
        let report = ConformanceReport::parse_json(&bytes)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let rendered = self.render(&report);
        self.emit(&rendered)?;
        Ok(ExitCode::Success)
    }

    fn cmd_registry(&mut self, cmd: &RegistryCommand) -> CliResult {
        let registry = Registry::new(&self.cli.registry);
        match cmd {
            RegistryCommand::Verify => {
                let findings = registry.verify()?;
                let (index, _) = registry.load()?;
                for finding in &findings {
                    let line = format!("{finding}\n");
                    self.emit(line.as_bytes())?;
                }
                let line = format!(
                    "{} record(s), {} finding(s)\n",
                    index.records.len(),
                    findings.len()
                );
                self.emit(line.as_bytes())?;
                Ok(if findings.is_empty() {
                    ExitCode::Success
                } else {
                    ExitCode::ValidationError
                })
            }
            RegistryCommand::List | RegistryCommand::History { .. } => {
                let (index, findings) = registry.load()?;
                if !findings.is_empty() {
                    self.diag(format!(
                        "warning: registry has {} verification finding(s); run `prl registry verify`",
                        findings.len()
                    ));
                }
                let records: Vec<&registry::RegistryRecord> = match cmd {
                    RegistryCommand::History { asset_id } => registry::history(&index, asset_id),
                    _ => index.records.iter().collect(),
                };
                let bytes = match self.cli.format {
                    OutputFormat::Json => document::to_canonical_pretty(&records),
                    _ => records
                        .iter()
                        .map(|r| {
                            format!(
                                "{}\t{}@{}\t{}\t{}\t{}\n",
                                r.record_seq,
                                r.asset_id,
                                r.version,
                                r.recorded_at.to_rfc3339(),
                                reporting::render_tuple(&r.result),
                                &r.record_hash[..12]
                            )
                        })
                        .collect::<String>()
                        .into_bytes(),
                };
                self.emit(&bytes)?;
                Ok(ExitCode::Success)
            }
        }
    }

    fn cmd_profile(&mut self, cmd: &ProfileCommand) -> CliResult {
        match cmd {
            ProfileCommand::Init { path: None } => {
                self.emit(gating::CANONICAL_PROFILE_JSON.as_bytes())?;
                Ok(ExitCode::Success)
            }
            ProfileCommand::Init { path: Some(path) } => {
                if path.exists() {
                    return Err(CliError::validation(format!(
                        "{} already exists",
                        path.display()
                    )));
                }
                fs::write(path, gating::CANONICAL_PROFILE_JSON)
                    .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))?;
                Ok(ExitCode::Success)
            }
            ProfileCommand::Validate { path } => {
                let bytes = fs::read(path)
                    .map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))?;
                let profile = gating::load_profile(&bytes)
                    .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
                let line = format!(
                    "{}: valid ({})\n",
                    profile.profile_id,
                    if profile.canonical {
                        "canonical"
                    } else {
                        "non-canonical"
                    }
                );
                self.emit(line.as_bytes())?;
                Ok(ExitCode::Success)
            }
        }
    }

    fn cmd_evidence(&mut self, cmd: &EvidenceCommand) -> CliResult {
        match cmd {
            EvidenceCommand::Add {
                asset_root,
                kind,
                path,
                note,
            } => {
                let manifest = self.load_manifest(asset_root)?;
                let kind: EvidenceKind = kind.parse().map_err(CliError::validation)?;
                let resolved = asset_model::resolve_inside(asset_root, path)
                    .map_err(|issue| CliError::validation(format!("{path}: {issue}")))?
                    .ok_or_else(|| CliError::validation(format!("{path}: file not found")))?;
                let content = fs::read(&resolved)
                    .map_err(|e| CliError::io(format!("reading {path}: {e}")))?;
                let dir = asset_root.join(&manifest.evidence_dir);
                fs::create_dir_all(&dir)
                    .map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
                let _lock = WriterLock::acquire(&dir)?;
                let index_file = index_path(asset_root, &manifest);
                let mut index = read_index(&index_file)?;
                index
                    .upsert(EvidenceEntry {
                        kind,
                        path: path.clone(),
                        sha256: document::sha256_hex(&content),
                        created: self.now(),
                        note: note.clone(),
                    })
                    .map_err(CliError::validation)?;
                write_atomic(&index_file, &document::to_canonical_pretty(&index))
                    .map_err(|e| CliError::io(format!("writing {}: {e}", index_file.display())))?;
                self.diag(format!("indexed {path}"));
                Ok(ExitCode::Success)
            }
            EvidenceCommand::Verify { asset_root } => {
                let manifest = self.load_manifest(asset_root)?;
                let index = read_index(&index_path(asset_root, &manifest))?;
                let findings = evidence::verify_evidence_integrity(&index, asset_root)
                    .map_err(CliError::io)?;
                for finding in &findings {
                    let line = format!("{finding}\n");
                    self.emit(line.as_bytes())?;
                }
                let line = format!(
                    "{} entr(ies), {} finding(s)\n",
                    index.entries.len(),
                    findings.len()
                );
                self.emit(line.as_bytes())?;
                Ok(if findings.is_empty() {
                    ExitCode::Success
                } else {
                    ExitCode::ValidationError
                })
            }
            EvidenceCommand::Status { asset_root } => {
                let manifest = self.load_manifest(asset_root)?;
                let matrix = self.load_matrix()?;
                let state = self.load_evidence(asset_root, &manifest, &matrix)?;
                let bytes = match self.cli.format {
                    OutputFormat::Json => document::to_canonical_pretty(&state.statuses),
                    _ => {
                        let mut text = format!("evidence level {}\n", state.level);
                        for s in &state.statuses {
                            text.push_str(&format!(
                                "level {}: {}{}\n",
                                s.level,
                                if s.satisfied { "satisfied" } else { "missing " },
                                s.missing.join(", ")
                            ));
                        }
                        text.into_bytes()
                    }
                };
                self.emit(&bytes)?;
                Ok(ExitCode::Success)
            }
        }
    }
}

fn index_path(root: &Path, manifest: &PromptAssetManifest) -> PathBuf {
    root.join(&manifest.evidence_dir).join(evidence::INDEX_FILE)
}

fn read_index(path: &Path) -> Result<EvidenceIndex, CliError> {
    match fs::read(path) {
        Ok(bytes) => EvidenceIndex::parse(&bytes)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(EvidenceIndex::default()),
        Err(e) => Err(CliError::io(format!("reading {}: {e}", path.display()))),
    }
}

/// Reads `*.json` batch files in file-name order. A missing directory means
/// no batches.
fn load_batches(dir: &Path) -> Result<Vec<EvaluationBatch>, CliError> {
    let entries = match fs::read_dir(dir) {
        Ok(entries) => entries,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(CliError::io(format!("reading {}: {e}", dir.display()))),
    };
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| CliError::io(format!("reading {}: {e}", dir.display())))?
            .path();
        if path.extension().is_some_and(|ext| ext == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .iter()
        .map(|path| {
            let bytes = fs::read(path)
                .map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))?;
            document::parse_strict::<EvaluationBatch>(&bytes)
                .map_err(|e| CliError::validation(format!("batch {}: {e}", path.display())))
        })
        .collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn render_frontier(frontier: &gating::ImprovementFrontier) -> String {
    let mut text = format!("frontier to level {}:\n", frontier.target);
    for (key, deficit) in frontier.deficits.iter() {
        if deficit > 0.0 {
            text.push_str(&format!(
                "  {key}: +{}\n",
                reporting::format_number(deficit)
            ));
        }
    }
    if frontier.prs_deficit > 0.0 {
        text.push_str(&format!(
            "  PRS: +{}\n",
            reporting::format_number(frontier.prs_deficit)
        ));
    }
    text
}

fn format_sweep_value(v: f64) -> String {
    // Sweep values can need more than two decimals (e.g. lambda steps).
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

pub const MAX_SWEEP_STEPS: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Lambda,
    Weight(DimensionKey),
    ThetaOffset,
    DeltaOffset(Option<DimensionKey>),
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Lambda => f.write_str("lambda"),
            Self::Weight(k) => write!(f, "weight.{k}"),
            Self::ThetaOffset => f.write_str("theta"),
            Self::DeltaOffset(None) => f.write_str("delta"),
            Self::DeltaOffset(Some(k)) => write!(f, "delta.{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub start: f64,
    pub end: f64,
    pub steps: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub prs: f64,
    pub score_level: u8,
}

impl Sweep {
    /// Parses `PARAM=START:END:STEPS`; STEPS intervals give STEPS + 1 rows.
    pub fn parse(spec: &str) -> Result<Self, String> {
        let (name, range) = spec
            .split_once('=')
            .ok_or("expected PARAM=START:END:STEPS")?;
        let parameter = match name {
            "lambda" => SweepParameter::Lambda,
            "theta" => SweepParameter::ThetaOffset,
            "delta" => SweepParameter::DeltaOffset(None),
            other => {
                let dim = |s: &str| s.parse::<DimensionKey>();
                if let Some(d) = other.strip_prefix("weight.") {
                    SweepParameter::Weight(dim(d)?)
                } else if let Some(d) = other.strip_prefix("delta.") {
                    SweepParameter::DeltaOffset(Some(dim(d)?))
                } else {
                    return Err(format!("unknown parameter `{other}`"));
                }
            }
        };
        let parts: Vec<&str> = range.split(':').collect();
        let [start, end, steps] = parts[..] else {
            return Err("expected START:END:STEPS".into());
        };
        let number = |s: &str| -> Result<f64, String> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("`{s}` is not a finite number"))
        };
        let steps: u32 = steps
            .parse()
            .map_err(|_| format!("`{steps}` is not a step count"))?;
        if steps == 0 || steps > MAX_SWEEP_STEPS {
            return Err(format!("step count must be in 1..={MAX_SWEEP_STEPS}"));
        }
        Ok(Self {
            parameter,
            start: number(start)?,
            end: number(end)?,
            steps,
        })
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |i| {
            if i == self.steps {
                self.end
            } else {
                self.start + (self.end - self.start) * f64::from(i) / f64::from(self.steps)
            }
        })
    }

    /// Profile with the parameter set to `value`.
    pub fn apply(
        &self,
        profile: &ThresholdProfile,
        value: f64,
    ) -> Result<ThresholdProfile, String> {
        let mut scoring = profile.scoring.clone();
        let mut levels: Vec<LevelRow> = profile.levels().to_vec();
        match self.parameter {
            SweepParameter::Lambda => {
                if value < 0.0 {
                    return Err(format!("lambda {value} is negative"));
                }
                scoring.lambda = value;
            }
            SweepParameter::Weight(key) => {
                scoring.weights = renormalized_weights(&scoring.weights, key, value)?;
            }
            SweepParameter::ThetaOffset => {
                for (row, base) in levels.iter_mut().zip(profile.levels()) {
                    row.theta = (base.theta + value).clamp(0.0, 100.0);
                }
            }
            SweepParameter::DeltaOffset(which) => {
                for (row, base) in levels.iter_mut().zip(profile.levels()) {
                    for key in DimensionKey::ALL {
                        if which.is_none() || which == Some(key) {
                            let shifted = (base.delta[key] + value).clamp(0.0, 100.0);
                            row.delta = row.delta.with(key, shifted).map_err(|e| e.to_string())?;
                        }
                    }
                }
            }
        }
        profile.modified(scoring, levels).map_err(|e| e.to_string())
    }

    pub fn run(
        &self,
        summary: &ScoreSummary,
        profile: &ThresholdProfile,
    ) -> Result<Vec<SweepRow>, String> {
        self.values()
            .map(|value| {
                let p = self.apply(profile, value)?;
                let prs = scoring::compute_prs(summary, &p);
                Ok(SweepRow {
                    value,
                    prs,
                    score_level: gating::determine_prl(prs, &summary.means, &p),
                })
            })
            .collect()
    }
}

/// Sets one weight and rescales the others proportionally so the total
/// stays 1. If the others are all zero they share the remainder equally.
pub fn renormalized_weights(
    weights: &DimValues,
    key: DimensionKey,
    value: f64,
) -> Result<DimValues, String> {
    if !(0.0..=1.0).contains(&value) {
        return Err(format!("weight {value} is outside [0, 1]"));
    }
    let others: f64 = weights
        .iter()
        .filter(|(k, _)| *k != key)
        .map(|(_, w)| w)
        .sum();
    let remainder = 1.0 - value;
    Ok(DimValues::from_fn(|k| {
        if k == key {
            value
        } else if others > 0.0 {
            weights[k] * remainder / others
        } else {
            remainder / 4.0
        }
    }))
}

fn default_asset_id(dir: &Path) -> String {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().to_lowercase())
        .unwrap_or_default();
    let id: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_lowercase() || c.is_ascii_digit() {
                c
            } else {
                '-'
            }
        })
        .take(64)
        .collect();
    let id = id.trim_matches('-').to_string();
    if id.is_empty() {
        "prompt-asset".into()
    } else {
        id
    }
}

fn scaffold_manifest(asset_id: &str, version: &str, owner: &str) -> PromptAssetManifest {
    use crate::asset_model::*;
    PromptAssetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION.into(),
        id: VersionId {
            asset_id: asset_id.into(),
            version: version.into(),
        },
        prompt_spec: PromptSpec {
            template_path: "prompt/template.txt".into(),
            instructions: "Describe the task this prompt performs.".into(),
            examples_path: None,
        },
        interface: InterfaceSpec {
            input_schema_path: "schema/input.json".into(),
            output_schema_path: "schema/output.json".into(),
        },
        execution_context: ExecutionContext {
            model_binding: ModelBinding {
                provider: "unspecified".into(),
                model: "unspecified".into(),
                model_version: None,
            },
            inference_parameters: [("temperature".to_string(), ParamValue::Number(0.into()))]
                .into_iter()
                .collect(),
            tool_policies: Vec::new(),
            retrieval_policies: Vec::new(),
        },
        assurance: AssurancePackage {
            test_suite_path: "tests/suite.json".into(),
            acceptance_criteria: vec!["Define measurable acceptance criteria.".into()],
        },
        evidence_dir: DEFAULT_EVIDENCE_DIR.into(),
        governance: GovernanceMetadata {
            owner: owner.into(),
            approvals: Vec::new(),
            license: "UNLICENSED".into(),
            ip_notes: None,
        },
        claimed_prl: None,
    }
}

fn write_scaffold(dir: &Path, manifest: &PromptAssetManifest) -> io::Result<()> {
    let schema = b"{\n  \"type\": \"object\"\n}\n";
    fs::create_dir_all(dir.join("prompt"))?;
    fs::create_dir_all(dir.join("schema"))?;
    fs::create_dir_all(dir.join("tests"))?;
    fs::create_dir_all(dir.join(&manifest.evidence_dir).join("batches"))?;
    fs::write(
        dir.join("prompt/template.txt"),
        "You are a helpful assistant.\n\n{{input}}\n",
    )?;
    fs::write(dir.join("schema/input.json"), schema)?;
    fs::write(dir.join("schema/output.json"), schema)?;
    fs::write(dir.join("tests/suite.json"), "{\n  \"cases\": []\n}\n")?;
    fs::write(
        dir.join(&manifest.evidence_dir).join(evidence::INDEX_FILE),
        document::to_canonical_pretty(&EvidenceIndex::default()),
    )?;
    fs::write(
        dir.join(MANIFEST_FILE),
        document::to_canonical_pretty(manifest),
    )
}
