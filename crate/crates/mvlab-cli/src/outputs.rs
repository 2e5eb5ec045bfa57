//! Output persistence: atomic file writes and the versioned summary schema.

use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{run_err, CliError, RunConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Write through a temp file in the same directory and rename into place, so
/// readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)
        .map_err(|e| run_err(format!("create {}: {e}", dir.display())))?;
    let file_name = path
        .file_name()
        .ok_or_else(|| run_err(format!("bad output path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", file_name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| run_err(format!("write {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| run_err(format!("rename into {}: {e}", path.display())))?;
    Ok(())
}

/// Assemble the summary document: schema version, subcommand, the complete
/// effective config (rerunning from it reproduces all results), and the
/// subcommand's payload.
pub fn summary(command: &str, config: &RunConfig, payload: Value) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": serde_json::to_value(config).expect("config serializes"),
        "result": payload,
    })
}

pub fn write_summary(out_dir: &Path, doc: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(doc).expect("summary serializes");
    atomic_write(&out_dir.join("summary.json"), text.as_bytes())
}

/// The effective config alone, usable directly via `--config`.
pub fn write_config_echo(out_dir: &Path, config: &RunConfig) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(config).expect("config serializes");
    atomic_write(&out_dir.join("config.echo.json"), text.as_bytes())
}

pub fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("serializable")
}
