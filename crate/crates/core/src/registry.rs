//! Append-only, hash-chained qualification records.
//!
//! Records live in `records.jsonl` under the registry directory, one compact
//! canonical JSON object per LF-terminated line. Each record's hash covers
//! every other field, including the previous record's hash, so any edit to a
//! persisted record breaks verification at that record.

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::asset_model::AssetFingerprint;
use crate::document;
use crate::gating::QualificationResult;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const LOCK_FILE: &str = ".lock";
pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryRecord {
    pub record_seq: u64,
    pub recorded_at: DateTime<Utc>,
    pub asset_id: String,
    pub version: String,
    pub fingerprint: AssetFingerprint,
    pub result: QualificationResult,
    pub profile_id: String,
    pub prev_hash: String,
    pub record_hash: String,
}

/// The caller-supplied part of a record.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordDraft {
    pub asset_id: String,
    pub version: String,
    pub fingerprint: AssetFingerprint,
    pub result: QualificationResult,
    pub profile_id: String,
}

impl RegistryRecord {
    /// SHA-256 over the compact canonical form of every field except
    /// `record_hash`.
    pub fn compute_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("record serializes");
        value
            .as_object_mut()
            .expect("record is an object")
            .remove("record_hash");
        document::sha256_hex(&document::to_canonical_compact(&value))
    }

    /// The persisted line, without the trailing LF.
    pub fn canonical_line(&self) -> Vec<u8> {
        document::to_canonical_compact(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainFindingKind {
    MalformedRecord,
    NonCanonical,
    MissingTerminator,
    SequenceGap,
    BrokenLink,
    HashMismatch,
}

impl ChainFindingKind {
    pub fn code(&self) -> &'static str {
        match self {
            Self::MalformedRecord => "MALFORMED_RECORD",
            Self::NonCanonical => "NON_CANONICAL",
            Self::MissingTerminator => "MISSING_TERMINATOR",
            Self::SequenceGap => "SEQUENCE_GAP",
            Self::BrokenLink => "BROKEN_LINK",
            Self::HashMismatch => "HASH_MISMATCH",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainFinding {
    pub kind: ChainFindingKind,
    /// Sequence number of the offending record, when it could be read.
    pub record_seq: Option<u64>,
    /// 1-based line in `records.jsonl`, for persisted registries.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ChainFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.code())?;
        if let Some(seq) = self.record_seq {
            write!(f, " seq={seq}")?;
        }
        if let Some(line) = self.line {
            write!(f, " line={line}")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("registry is locked by another writer ({0})")]
    LockHeld(String),
    #[error("registry I/O failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("registry chain is corrupt: {}", .0.first().map(ToString::to_string).unwrap_or_default())]
    ChainCorrupt(Vec<ChainFinding>),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RegistryError + '_ {
    move |source| RegistryError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegistryIndex {
    pub records: Vec<RegistryRecord>,
}

impl RegistryIndex {
    /// Appends a record linked to the current head. Refuses if the existing
    /// chain does not verify.
    pub fn append(
        &mut self,
        draft: RecordDraft,
        recorded_at: DateTime<Utc>,
    ) -> Result<&RegistryRecord, RegistryError> {
        let findings = verify_chain(self);
        if !findings.is_empty() {
            return Err(RegistryError::ChainCorrupt(findings));
        }
        let (record_seq, prev_hash) = match self.records.last() {
            Some(head) => (head.record_seq + 1, head.record_hash.clone()),
            None => (0, GENESIS_HASH.to_string()),
        };
        let mut record = RegistryRecord {
            record_seq,
            recorded_at: truncate_to_micros(recorded_at),
            asset_id: draft.asset_id,
            version: draft.version,
            fingerprint: draft.fingerprint,
            result: draft.result,
            profile_id: draft.profile_id,
            prev_hash,
            record_hash: String::new(),
        };
        record.record_hash = record.compute_hash();
        self.records.push(record);
        Ok(self.records.last().expect("just pushed"))
    }

    /// Serialized `records.jsonl` content.
    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for record in &self.records {
            out.extend_from_slice(&record.canonical_line());
            out.push(b'\n');
        }
        out
    }

    /// Parses `records.jsonl` content, reporting unreadable or non-canonical
    /// lines as findings. Unreadable lines are skipped in the returned index.
    pub fn parse_jsonl(bytes: &[u8]) -> (RegistryIndex, Vec<ChainFinding>) {
        let mut records = Vec::new();
        let mut findings = Vec::new();
        if bytes.is_empty() {
            return (RegistryIndex { records }, findings);
        }
        let body = match bytes.strip_suffix(b"\n") {
            Some(body) => body,
            None => {
                findings.push(ChainFinding {
                    kind: ChainFindingKind::MissingTerminator,
                    record_seq: None,
                    line: Some(bytes.split(|&b| b == b'\n').count()),
                    message: "last record is not LF-terminated".into(),
                });
                bytes
            }
        };
        for (i, line) in body.split(|&b| b == b'\n').enumerate() {
            let line_no = i + 1;
            let record: RegistryRecord = match serde_json::from_slice(line) {
                Ok(r) => r,
                Err(e) => {
                    findings.push(ChainFinding {
                        kind: ChainFindingKind::MalformedRecord,
                        record_seq: None,
                        line: Some(line_no),
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            if record.canonical_line() != line {
                findings.push(ChainFinding {
                    kind: ChainFindingKind::NonCanonical,
                    record_seq: Some(record.record_seq),
                    line: Some(line_no),
                    message: "line differs from the record's canonical form".into(),
                });
            }
            records.push(record);
        }
        (RegistryIndex { records }, findings)
    }
}

fn truncate_to_micros(t: DateTime<Utc>) -> DateTime<Utc> {
    // Keeps the JSON timestamp lossless across a serialize/parse cycle.
    DateTime::parse_from_rfc3339(&t.to_rfc3339_opts(SecondsFormat::Micros, true))
        .expect("formatted timestamp parses")
        .with_timezone(&Utc)
}

/// Checks sequence numbering, hash linkage and every record's own hash.
pub fn verify_chain(index: &RegistryIndex) -> Vec<ChainFinding> {
    let mut findings = Vec::new();
    let mut expected_prev = GENESIS_HASH.to_string();
    for (position, record) in index.records.iter().enumerate() {
        let seq = Some(record.record_seq);
        if record.record_seq != position as u64 {
            findings.push(ChainFinding {
                kind: ChainFindingKind::SequenceGap,
                record_seq: seq,
                line: None,
                message: format!("expected record_seq {position}"),
            });
        }
        if record.prev_hash != expected_prev {
            findings.push(ChainFinding {
                kind: ChainFindingKind::BrokenLink,
                record_seq: seq,
                line: None,
                message: format!(
                    "prev_hash {} does not match {}",
                    record.prev_hash, expected_prev
                ),
            });
        }
        let recomputed = record.compute_hash();
        if recomputed != record.record_hash {
            findings.push(ChainFinding {
                kind: ChainFindingKind::HashMismatch,
                record_seq: seq,
                line: None,
                message: format!(
                    "record_hash {} recomputes to {recomputed}",
                    record.record_hash
                ),
            });
        }
        expected_prev = record.record_hash.clone();
    }
    findings
}

/// All records for `asset_id`, in sequence order.
pub fn history<'a>(index: &'a RegistryIndex, asset_id: &str) -> Vec<&'a RegistryRecord> {
    let mut out: Vec<_> = index
        .records
        .iter()
        .filter(|r| r.asset_id == asset_id)
        .collect();
    out.sort_by_key(|r| r.record_seq);
    out
}

/// A registry directory on disk.
#[derive(Debug, Clone)]
pub struct Registry {
    dir: PathBuf,
}

impl Registry {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn records_path(&self) -> PathBuf {
        self.dir.join(RECORDS_FILE)
    }

    /// Raw `records.jsonl` bytes; empty if the registry does not exist yet.
    pub fn read_bytes(&self) -> Result<Vec<u8>, RegistryError> {
        let path = self.records_path();
        match fs::read(&path) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    /// Loads the index together with every verification finding. Readers do
    /// not take the lock.
    pub fn load(&self) -> Result<(RegistryIndex, Vec<ChainFinding>), RegistryError> {
        let bytes = self.read_bytes()?;
        let (index, mut findings) = RegistryIndex::parse_jsonl(&bytes);
        findings.extend(verify_chain(&index));
        Ok((index, findings))
    }

    pub fn verify(&self) -> Result<Vec<ChainFinding>, RegistryError> {
        Ok(self.load()?.1)
    }

    /// Appends one record under the writer lock and persists the registry
    /// by write-then-rename.
    pub fn append(
        &self,
        draft: RecordDraft,
        recorded_at: DateTime<Utc>,
    ) -> Result<RegistryRecord, RegistryError> {
        fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        let _lock = WriterLock::acquire(&self.dir)?;

        let (mut index, findings) = self.load()?;
        if !findings.is_empty() {
            return Err(RegistryError::ChainCorrupt(findings));
        }
        let record = index.append(draft, recorded_at)?.clone();

        let path = self.records_path();
        let tmp = self.dir.join(format!("{RECORDS_FILE}.tmp"));
        {
            let mut file = File::create(&tmp).map_err(io_err(&tmp))?;
            file.write_all(&index.to_jsonl()).map_err(io_err(&tmp))?;
            file.sync_all().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        Ok(record)
    }
}

/// Presence-based advisory lock; released on drop.
#[derive(Debug)]
pub struct WriterLock {
    path: PathBuf,
}

impl WriterLock {
    pub fn acquire(dir: &Path) -> Result<Self, RegistryError> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut file) => {
                let stamp = Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true);
                writeln!(file, "{} {stamp}", std::process::id()).map_err(io_err(&path))?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                let holder = fs::read_to_string(&path).unwrap_or_default();
                Err(RegistryError::LockHeld(format!(
                    "{}: {}",
                    path.display(),
                    holder.trim()
                )))
            }
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for WriterLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
