use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::args::Command;
use crate::error::CliError;

pub const SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// Time spent inside the estimators, summed over every decomposition.
    pub compute_ms: f64,
}

/// Everything needed to rerun a command and check that it reproduces.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seeds: Vec<u64>,
    pub threads: usize,
    pub inputs: Vec<InputDigest>,
    pub timestamps: Timestamps,
}

/// A report as written to stdout or `--out`.
///
/// `result_sha256` covers the compact serialization of `result` only, so
/// reruns can be compared while timestamps differ.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Envelope {
    pub schema: u32,
    pub manifest: RunManifest,
    pub result: Value,
    pub result_sha256: String,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<InputDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Compute(format!("cannot read {}: {e}", path.display())))?;
    Ok(InputDigest {
        path: path.display().to_string(),
        bytes: bytes.len() as u64,
        sha256: sha256_hex(&bytes),
    })
}

/// Removes every `wall_time_ms` field and returns their sum, so the result
/// holds only reproducible values.
pub fn strip_timings(value: &mut Value) -> f64 {
    match value {
        Value::Object(map) => {
            let own = map.remove("wall_time_ms").and_then(|v| v.as_f64()).unwrap_or(0.0);
            own + map.values_mut().map(strip_timings).sum::<f64>()
        }
        Value::Array(items) => items.iter_mut().map(strip_timings).sum(),
        _ => 0.0,
    }
}

pub fn result_digest(result: &Value) -> String {
    let compact = serde_json::to_string(result).expect("json values always serialize");
    sha256_hex(compact.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timings_are_removed_at_any_depth() {
        let mut v = serde_json::json!({
            "a": {"wall_time_ms": 2.5, "x": 1},
            "groups": [{"diagnostics": {"wall_time_ms": 1.0}}, {"other": null}],
        });
        let before = result_digest(&v);
        assert_eq!(strip_timings(&mut v), 3.5);
        assert_eq!(v, serde_json::json!({"a": {"x": 1}, "groups": [{"diagnostics": {}}, {"other": null}]}));
        assert_ne!(before, result_digest(&v));
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
