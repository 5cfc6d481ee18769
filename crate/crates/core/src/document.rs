//! Strict JSON document parsing and the canonical byte forms used for
//! hashing and on-disk output.

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Failure to turn bytes into a well-formed, fully populated document.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DocumentError {
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("invalid value for `{field}`: {constraint}")]
    InvalidValue { field: String, constraint: String },
}

impl DocumentError {
    pub fn invalid(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Self::InvalidValue {
            field: field.into(),
            constraint: constraint.into(),
        }
    }
}

/// Deserializes `bytes` as JSON, classifying serde failures by kind and
/// naming the dotted path of the offending field.
pub fn parse_strict<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, DocumentError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| DocumentError::Malformed(format!("not UTF-8: {e}")))?;
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize::<_, T>(&mut de).map_err(classify)?;
    de.end()
        .map_err(|e| DocumentError::Malformed(e.to_string()))?;
    Ok(value)
}

fn classify(err: serde_path_to_error::Error<serde_json::Error>) -> DocumentError {
    let path = err.path().to_string();
    let inner = err.into_inner();
    if !inner.is_data() {
        return DocumentError::Malformed(inner.to_string());
    }
    // serde_json appends " at line L column C"; drop it so messages are stable.
    let full = inner.to_string();
    let message = match full.rfind(" at line ") {
        Some(pos) => full[..pos].to_string(),
        None => full,
    };
    let join = |name: &str| {
        if path == "." || path.is_empty() {
            name.to_string()
        } else {
            format!("{path}.{name}")
        }
    };
    if let Some(name) = backticked(&message, "missing field `") {
        DocumentError::MissingField(join(name))
    } else if let Some(name) = backticked(&message, "unknown field `") {
        // For unknown fields serde_path_to_error already records the key.
        if path == "." || path.is_empty() {
            DocumentError::UnknownField(name.to_string())
        } else {
            DocumentError::UnknownField(path)
        }
    } else {
        let field = if path.is_empty() {
            ".".to_string()
        } else {
            path
        };
        DocumentError::InvalidValue {
            field,
            constraint: message,
        }
    }
}

fn backticked<'a>(message: &'a str, prefix: &str) -> Option<&'a str> {
    let rest = message.strip_prefix(prefix)?;
    rest.find('`').map(|end| &rest[..end])
}

/// Compact canonical JSON: keys sorted, no insignificant whitespace.
pub fn to_canonical_compact<T: Serialize>(value: &T) -> Vec<u8> {
    // serde_json::Value uses a BTreeMap, so re-serializing through it sorts keys.
    let value = serde_json::to_value(value).expect("serializable value");
    serde_json::to_vec(&value).expect("value serializes")
}

/// Pretty canonical JSON: keys sorted, two-space indentation, trailing newline.
pub fn to_canonical_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let value = serde_json::to_value(value).expect("serializable value");
    let mut out = serde_json::to_vec_pretty(&value).expect("value serializes");
    out.push(b'\n');
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn is_sha256_hex(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}
