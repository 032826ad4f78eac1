//! Line-delimited record I/O and the provenance sidecars every pipeline
//! artifact ships with.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads one JSON record per line, skipping blank lines.
pub fn read_jsonl<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, RecordError> {
    let mut items = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| RecordError::Malformed {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

/// Writes one JSON record per line.
pub fn write_jsonl<T: Serialize>(
    mut writer: impl Write,
    items: impl IntoIterator<Item = T>,
) -> Result<(), RecordError> {
    for item in items {
        let line = serde_json::to_string(&item)
            .map_err(|e| RecordError::Malformed { line: 0, reason: e.to_string() })?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Tool/config identity stamped next to every artifact as
/// `<artifact>.meta.json`. Kept out of the artifacts themselves so their
/// formats stay byte-stable and third-party readable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exemplar_hash: Option<String>,
}

impl Provenance {
    pub fn meta_path(artifact: &Path) -> PathBuf {
        let mut name = artifact
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        name.push_str(".meta.json");
        artifact.with_file_name(name)
    }

    pub fn write_for(&self, artifact: &Path) -> Result<(), RecordError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| RecordError::Malformed { line: 0, reason: e.to_string() })?;
        std::fs::write(Self::meta_path(artifact), json + "\n")?;
        Ok(())
    }

    pub fn read_for(artifact: &Path) -> Result<Self, RecordError> {
        let text = std::fs::read_to_string(Self::meta_path(artifact))?;
        serde_json::from_str(&text)
            .map_err(|e| RecordError::Malformed { line: 0, reason: e.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        k: String,
        v: u32,
    }

    #[test]
    fn jsonl_round_trip() {
        let rows = vec![Row { k: "a".into(), v: 1 }, Row { k: "b".into(), v: 2 }];
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &rows).unwrap();
        let back: Vec<Row> = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn malformed_line_is_reported_with_number() {
        let data = "{\"k\":\"a\",\"v\":1}\nnot json\n";
        match read_jsonl::<Row>(data.as_bytes()) {
            Err(RecordError::Malformed { line: 2, .. }) => {}
            other => panic!("expected line-2 error, got {other:?}"),
        }
    }

    #[test]
    fn sha256_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn meta_path_appends_suffix() {
        assert_eq!(
            Provenance::meta_path(Path::new("/tmp/out/matrix.txt")),
            PathBuf::from("/tmp/out/matrix.txt.meta.json")
        );
    }
}
