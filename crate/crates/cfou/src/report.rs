//! CSV / JSON emission with an embedded metadata block, so every output
//! file carries the exact configuration that produced it.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// Metadata block written as '#'-prefixed lines ahead of the CSV header.
/// No timestamps: identical configurations produce byte-identical files.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool_version: String,
    pub config_json: String,
}

impl Metadata {
    pub fn new(config_json: String) -> Self {
        Metadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_json,
        }
    }
}

/// Comma-separated table: '#' metadata lines, one header row, data rows.
/// Decimal points, no locale.
pub fn write_csv(
    path: &Path,
    meta: &Metadata,
    header: &str,
    rows: impl IntoIterator<Item = String>,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# cfou v{}\n", meta.tool_version));
    out.push_str(&format!("# config: {}\n", meta.config_json));
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// JSON report wrapped with the same metadata.
pub fn write_json<T: Serialize>(path: &Path, meta: &Metadata, report: &T) -> Result<()> {
    let doc = serde_json::json!({
        "tool_version": meta.tool_version,
        "config": serde_json::from_str::<serde_json::Value>(&meta.config_json)?,
        "report": report,
    });
    let mut f = std::fs::File::create(path)?;
    f.write_all(serde_json::to_string_pretty(&doc)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Canonical float formatting (shortest round-trip representation).
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::from("nan")
    }
}

/// Body of a report file: every line that is not metadata.
pub fn csv_body(contents: &str) -> String {
    contents
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The embedded config line, if present.
pub fn embedded_config(contents: &str) -> Option<&str> {
    contents
        .lines()
        .find_map(|l| l.strip_prefix("# config: "))
}
