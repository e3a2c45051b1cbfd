//! Line-oriented artifact files with a provenance header, written atomically.
//!
//! JSONL files start with `{"_meta": {...}}`; CSV files start with a
//! `# {"_meta": {...}}` comment line. Readers accept files with or without
//! the header.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TOOL: &str = "vistagraph";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub stage: String,
    pub config_hash: String,
}

impl Meta {
    pub fn new(stage: &str, config_hash: &str) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            stage: stage.into(),
            config_hash: config_hash.into(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    #[serde(rename = "_meta")]
    meta: Meta,
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn jsonl_bytes<T: Serialize>(meta: &Meta, records: &[T]) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec(&Header { meta: meta.clone() })?;
    out.push(b'\n');
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, meta: &Meta, records: &[T]) -> Result<()> {
    write_atomic(path, &jsonl_bytes(meta, records)?)
}

/// Parses JSONL; blank lines are skipped and a leading `_meta` line is
/// returned separately. Errors carry 1-based line numbers.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str, path: &Path) -> Result<(Option<Meta>, Vec<T>)> {
    let mut meta = None;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if out.is_empty() && meta.is_none() && line.starts_with("{\"_meta\"") {
            let h: Header = serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            meta = Some(h.meta);
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?);
    }
    Ok((meta, out))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<(Option<Meta>, Vec<T>)> {
    parse_jsonl(&read_text(path)?, path)
}

pub fn write_json<T: Serialize>(path: &Path, meta: &Meta, value: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        #[serde(rename = "_meta")]
        meta: &'a Meta,
        #[serde(flatten)]
        value: &'a T,
    }
    let mut bytes = serde_json::to_vec_pretty(&Doc { meta, value })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

pub fn csv_bytes<T: Serialize>(meta: &Meta, records: &[T]) -> Result<Vec<u8>> {
    let mut out = b"# ".to_vec();
    serde_json::to_writer(&mut out, &Header { meta: meta.clone() })?;
    out.push(b'\n');
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(|e| Error::invalid(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))
}

/// CSV with a header row only (for empty record sets, which `csv` would
/// otherwise write without a header).
pub fn csv_bytes_with_header<T: Serialize>(meta: &Meta, header: &[&str], records: &[T]) -> Result<Vec<u8>> {
    if !records.is_empty() {
        return csv_bytes(meta, records);
    }
    let mut out = b"# ".to_vec();
    serde_json::to_writer(&mut out, &Header { meta: meta.clone() })?;
    out.push(b'\n');
    out.extend_from_slice(header.join(",").as_bytes());
    out.push(b'\n');
    Ok(out)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_text(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    rdr.deserialize()
        .map(|r| r.map_err(|e| crate::roads::csv_error(path, &e)))
        .collect()
}
