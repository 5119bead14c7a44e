//! Shared helpers for the JSON document formats (goal nets, FCMs, knowledge
//! bases, scenarios).
//!
//! Parsing is done in two passes: the text is first read into a
//! [`serde_json::Value`] so malformed input reports a line and column, then a
//! field-level walk checks for missing and unexpected keys and reports a JSON
//! pointer to the offending location. Only then is the value converted into
//! the typed model.

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};
use thiserror::Error;

/// Error produced while reading one of the JSON document formats.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DocumentError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
}

impl DocumentError {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        DocumentError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// The JSON pointer of a schema error, if this is one.
    pub fn path(&self) -> Option<&str> {
        match self {
            DocumentError::Schema { path, .. } => Some(path),
            DocumentError::Syntax { .. } => None,
        }
    }
}

pub(crate) fn parse_value(text: &str) -> Result<Value, DocumentError> {
    serde_json::from_str(text).map_err(|e| DocumentError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Convert a schema-checked value into a typed record. Type mismatches are
/// reported with the pointer of the value that failed.
pub(crate) fn from_value<T: DeserializeOwned>(value: Value, base: &str) -> Result<T, DocumentError> {
    use serde_path_to_error::Segment;
    serde_path_to_error::deserialize(value).map_err(|e| {
        let mut path = base.to_string();
        for seg in e.path().iter() {
            match seg {
                Segment::Seq { index } => path = child(&path, index),
                Segment::Map { key } => path = child(&path, key),
                Segment::Enum { variant } => path = child(&path, variant),
                Segment::Unknown => {}
            }
        }
        DocumentError::schema(root_or(&path), e.into_inner().to_string())
    })
}

fn root_or(base: &str) -> String {
    if base.is_empty() {
        "/".to_string()
    } else {
        base.to_string()
    }
}

pub(crate) fn child(path: &str, key: impl std::fmt::Display) -> String {
    format!("{}/{}", path, key)
}

pub(crate) fn as_object<'a>(value: &'a Value, path: &str) -> Result<&'a Map<String, Value>, DocumentError> {
    value
        .as_object()
        .ok_or_else(|| DocumentError::schema(root_or(path), "expected an object"))
}

pub(crate) fn as_array<'a>(value: &'a Value, path: &str) -> Result<&'a Vec<Value>, DocumentError> {
    value
        .as_array()
        .ok_or_else(|| DocumentError::schema(root_or(path), "expected an array"))
}

/// Check that `obj` has every `required` key and nothing outside
/// `required ∪ optional`.
pub(crate) fn expect_fields(
    obj: &Map<String, Value>,
    path: &str,
    required: &[&str],
    optional: &[&str],
) -> Result<(), DocumentError> {
    for key in required {
        if !obj.contains_key(*key) {
            return Err(DocumentError::schema(child(path, key), "missing field"));
        }
    }
    for key in obj.keys() {
        if !required.contains(&key.as_str()) && !optional.contains(&key.as_str()) {
            return Err(DocumentError::schema(child(path, key), "unexpected field"));
        }
    }
    Ok(())
}

/// Apply [`expect_fields`] to every element of the array stored at `key`.
pub(crate) fn expect_each(
    obj: &Map<String, Value>,
    path: &str,
    key: &str,
    required: &[&str],
    optional: &[&str],
) -> Result<(), DocumentError> {
    let Some(value) = obj.get(key) else {
        return Ok(());
    };
    let arr_path = child(path, key);
    for (i, item) in as_array(value, &arr_path)?.iter().enumerate() {
        let item_path = child(&arr_path, i);
        expect_fields(as_object(item, &item_path)?, &item_path, required, optional)?;
    }
    Ok(())
}
