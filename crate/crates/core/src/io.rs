//! JSON and JSON Lines persistence for every artifact type.
//!
//! Parse failures carry the byte offset into the input and the dotted field
//! path at which decoding stopped.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::error::{Error, Result};

#[derive(Debug, Error)]
pub struct FormatError {
    /// Byte offset into the full input where decoding failed.
    pub offset: usize,
    /// Field path (e.g. `edges[3].cost`); `.` when the failure is at the root.
    pub path: String,
    pub message: String,
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "parse error at byte {} (field `{}`): {}",
            self.offset, self.path, self.message
        )
    }
}

fn line_col_to_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(text.len());
        }
        offset += l.len();
    }
    text.len()
}

/// Decodes one JSON document.
pub fn from_json_str<T: DeserializeOwned>(text: &str) -> Result<T, FormatError> {
    from_json_at(text, 0)
}

fn from_json_at<T: DeserializeOwned>(text: &str, base: usize) -> Result<T, FormatError> {
    let located = |inner: serde_json::Error, path: String| {
        let offset = if inner.is_eof() {
            text.len()
        } else {
            line_col_to_offset(text, inner.line(), inner.column())
        };
        FormatError {
            offset: base + offset,
            path,
            message: inner.to_string(),
        }
    };
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let path = err.path().to_string();
        located(err.into_inner(), path)
    })?;
    de.end().map_err(|e| located(e, ".".to_string()))?;
    Ok(value)
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("artifact types serialize infallibly")
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("artifact types serialize infallibly")
}

/// Decodes JSON Lines; blank lines are skipped. Offsets refer to the whole input.
pub fn from_jsonl_str<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, FormatError> {
    let mut out = Vec::new();
    let mut base = 0;
    for line in text.split_inclusive('\n') {
        let body = line.trim_end_matches(['\n', '\r']);
        if !body.trim().is_empty() {
            out.push(from_json_at(body, base)?);
        }
        base += line.len();
    }
    Ok(out)
}

pub fn to_jsonl_string<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for item in items {
        s.push_str(&to_json_string(item));
        s.push('\n');
    }
    s
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(from_json_str(&read_text(path)?)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = to_json_pretty(value);
    text.push('\n');
    write_text(path, &text)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    Ok(from_jsonl_str(&read_text(path)?)?)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_text(path, &to_jsonl_string(items))
}
