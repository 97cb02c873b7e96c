use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::CliError;

/// Key excluded from checksums: the only field that legitimately differs
/// between reruns.
const TIMESTAMP_KEY: &str = "wall_clock_ms";

pub fn digest_bytes(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn strip_timestamps(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            map.remove(TIMESTAMP_KEY);
            map.values_mut().for_each(strip_timestamps);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timestamps),
        _ => {}
    }
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            files_under(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// SHA-256 over every file below `dir` in path order, each prefixed by its
/// relative path; JSON files are hashed with timestamps removed.
pub fn digest_dir(dir: &Path) -> Result<String, CliError> {
    let io = |e: std::io::Error| CliError::Config(format!("cannot read {}: {e}", dir.display()));
    let mut files = Vec::new();
    files_under(dir, &mut files).map_err(io)?;
    files.sort();
    let mut hasher = Sha256::new();
    for path in files {
        let rel = path.strip_prefix(dir).unwrap_or(&path);
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0]);
        let bytes = std::fs::read(&path).map_err(io)?;
        if path.extension().is_some_and(|e| e == "json") {
            let mut v: serde_json::Value = serde_json::from_slice(&bytes).map_err(mel_core::Error::from)?;
            strip_timestamps(&mut v);
            hasher.update(serde_json::to_vec(&v).map_err(mel_core::Error::from)?);
        } else {
            hasher.update(&bytes);
        }
        hasher.update([0]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
