//! Artifact I/O: line-delimited JSON stores with a run-metadata header line.
//!
//! Every artifact starts with one header record carrying the tool version,
//! config digest, and cache digest, so a run's provenance travels with its
//! outputs. Readers accept headerless files too (caches and hand-built
//! fixtures).

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Record {
        path: String,
        line: usize,
        message: String,
    },
}

/// Run provenance header written as the first line of every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub artifact: String,
    pub tool_version: String,
    pub config_digest: String,
    pub cache_digest: String,
}

impl RunMeta {
    pub fn new(artifact: &str, config_digest: &str, cache_digest: &str) -> Self {
        Self {
            artifact: artifact.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: config_digest.to_string(),
            cache_digest: cache_digest.to_string(),
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn ensure_parent_dir(path: &Path) -> Result<(), StoreError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    Ok(())
}

/// Writes a JSONL artifact: the meta header line, then one line per record.
pub fn write_jsonl<T: Serialize>(
    path: &Path,
    meta: &RunMeta,
    records: &[T],
) -> Result<(), StoreError> {
    ensure_parent_dir(path)?;
    let mut buf = serde_json::to_string(meta).expect("meta serializes");
    for record in records {
        buf.push('\n');
        buf.push_str(&serde_json::to_string(record).expect("record serializes"));
    }
    buf.push('\n');
    let mut file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(buf.as_bytes()).map_err(|e| io_err(path, e))
}

/// Reads a JSONL artifact; the header line is optional.
pub fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
) -> Result<(Option<RunMeta>, Vec<T>), StoreError> {
    let data = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut meta = None;
    let mut records = Vec::new();
    for (no, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if no == 0 {
            if let Ok(value) = serde_json::from_str::<serde_json::Value>(line) {
                if value.get("artifact").is_some() {
                    meta = serde_json::from_str(line).ok();
                    continue;
                }
            }
        }
        let record: T = serde_json::from_str(line).map_err(|e| StoreError::Record {
            path: path.display().to_string(),
            line: no + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok((meta, records))
}

/// Writes a JSON report document with the meta embedded under "meta".
pub fn write_json_doc<T: Serialize>(path: &Path, meta: &RunMeta, body: &T) -> Result<(), StoreError> {
    ensure_parent_dir(path)?;
    let doc = serde_json::json!({
        "meta": meta,
        "report": body,
    });
    let text = serde_json::to_string_pretty(&doc).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

pub fn read_json_doc<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let data = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&data).map_err(|e| StoreError::Record {
            path: path.display().to_string(),
            line: 1,
            message: e.to_string(),
        })?;
    let body = value.get("report").cloned().unwrap_or(value);
    serde_json::from_value(body).map_err(|e| StoreError::Record {
        path: path.display().to_string(),
        line: 1,
        message: e.to_string(),
    })
}

pub fn file_digest(path: &Path) -> String {
    match std::fs::read(path) {
        Ok(bytes) => crate::backends::sha256_hex(&bytes),
        Err(_) => "absent".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, serde::Deserialize)]
    struct Row {
        id: u64,
        text: String,
    }

    #[test]
    fn jsonl_round_trip_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        let meta = RunMeta::new("rows", "cfg", "cache");
        let rows = vec![
            Row { id: 1, text: "a".to_string() },
            Row { id: 2, text: "b".to_string() },
        ];
        write_jsonl(&path, &meta, &rows).unwrap();
        let (read_meta, read_rows): (Option<RunMeta>, Vec<Row>) = read_jsonl(&path).unwrap();
        assert_eq!(read_meta.unwrap(), meta);
        assert_eq!(read_rows, rows);
    }

    #[test]
    fn headerless_files_still_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        std::fs::write(&path, "{\"id\":7,\"text\":\"x\"}\n").unwrap();
        let (meta, rows): (Option<RunMeta>, Vec<Row>) = read_jsonl(&path).unwrap();
        assert!(meta.is_none());
        assert_eq!(rows, vec![Row { id: 7, text: "x".to_string() }]);
    }

    #[test]
    fn corrupt_line_reports_path_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        std::fs::write(&path, "{\"id\":7,\"text\":\"x\"}\nnot json\n").unwrap();
        let err = read_jsonl::<Row>(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }
}
