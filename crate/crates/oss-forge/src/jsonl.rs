//! Newline-delimited JSON record streams with atomic writes.
//!
//! Every pipeline artifact is either a JSONL record stream, a JSON report,
//! or a CSV series. Writers stage content in a temporary file in the target
//! directory and atomically rename it into place, so a killed stage never
//! leaves a partially-visible artifact.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{ForgeError, Result};

/// Reads a whole JSONL file into memory. Malformed lines are fatal and carry
/// their line number; blank lines are ignored.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| ForgeError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ForgeError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| ForgeError::MalformedRecord {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Serializes records one per line and atomically installs the file.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for record in records {
        serde_json::to_writer(&mut buf, record).map_err(|e| {
            ForgeError::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e))
        })?;
        buf.push(b'\n');
    }
    atomic_write(path, &buf)
}

/// Serializes a single value as pretty JSON and atomically installs it.
pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut buf = serde_json::to_vec_pretty(value).map_err(|e| {
        ForgeError::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    })?;
    buf.push(b'\n');
    atomic_write(path, &buf)
}

/// Writes `bytes` to `path` via a temp file + rename in the same directory.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(|e| ForgeError::io(dir, e))?;
    }
    let dir = dir.unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| ForgeError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| ForgeError::io(path, e))?;
    tmp.flush().map_err(|e| ForgeError::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| ForgeError::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Rec {
        id: String,
        n: u32,
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("recs.jsonl");
        let recs = vec![
            Rec { id: "a".into(), n: 1 },
            Rec { id: "line\nbreak \"quoted\"".into(), n: 2 },
        ];
        write_jsonl(&path, &recs).unwrap();
        let back: Vec<Rec> = read_jsonl(&path).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn malformed_line_is_reported_with_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"id\":\"a\",\"n\":1}\nnot json\n").unwrap();
        let err = read_jsonl::<Rec>(&path).unwrap_err();
        match err {
            ForgeError::MalformedRecord { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_jsonl::<Rec>(Path::new("/nonexistent/x.jsonl")).unwrap_err();
        assert!(matches!(err, ForgeError::Io { .. }));
    }
}
