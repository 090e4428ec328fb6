//! Markdown summary of a finished run directory.

use std::fmt::Write as _;
use std::path::Path;

use crate::backtest::{BACKTEST_FILE, RESIDUAL_FILE};
use crate::experiment::{AGGREGATE_FILE, DISTANCE_FILE};
use crate::manifest::Manifest;
use crate::HarnessError;

pub const REPORT_FILE: &str = "report.md";

fn csv_table(path: &Path) -> Result<String, HarnessError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let mut s = format!("| {} |\n", headers.iter().collect::<Vec<_>>().join(" | "));
    let _ = writeln!(s, "|{}", "---|".repeat(headers.len()));
    for rec in rdr.records() {
        let _ = writeln!(s, "| {} |", rec?.iter().collect::<Vec<_>>().join(" | "));
    }
    Ok(s)
}

/// Renders the tables found in `out` plus the manifest header; returns the
/// markdown (also written to `out/report.md`).
pub fn write_report(out: &Path) -> Result<String, HarnessError> {
    let m = Manifest::read(out)?;
    let mut s = format!("# Run report: {}\n\n", out.display());
    let _ = writeln!(s, "- verb: `{}`", m.verb);
    let _ = writeln!(s, "- tool version: {}", m.version);
    let _ = writeln!(s, "- config sha256: `{}`", m.config_sha256);
    let _ = writeln!(s, "- seed: {}, replicates: {}, threads: {}", m.seed, m.replicates, m.threads);
    let _ = writeln!(s, "- wall time: {:.2} s", m.wall_seconds);
    if !m.failed_replicates.is_empty() {
        let _ = writeln!(s, "- failed replicates: {:?}", m.failed_replicates);
    }
    for (title, file) in [
        ("Accuracy", AGGREGATE_FILE),
        ("Distances to the reference", DISTANCE_FILE),
        ("VaR backtest", BACKTEST_FILE),
    ] {
        let p = out.join(file);
        if p.exists() {
            let _ = write!(s, "\n## {title}\n\n{}", csv_table(&p)?);
        }
    }
    let p = out.join(RESIDUAL_FILE);
    if p.exists() {
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(p)?)?;
        let _ = write!(s, "\n## Residual tests\n\n```json\n{}\n```\n", serde_json::to_string_pretty(&v)?);
    }
    let stale = m.stale_files(out);
    if !stale.is_empty() {
        let _ = writeln!(s, "\n**Files changed since the manifest was written:** {}", stale.join(", "));
    }
    std::fs::write(out.join(REPORT_FILE), &s)?;
    Ok(s)
}
