//! CSV and JSON output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::run::{Report, Row};
use crate::CliError;

pub const CSV_HEADER: &str = "t,estimate,stderr,theoretical_bound";

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Rows as CSV; numbers use the shortest representation that parses back
/// to the same `f64`, missing values are empty.
pub fn csv(rows: &[Row]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.t,
            r.estimate,
            cell(r.stderr),
            cell(r.theoretical_bound)
        );
    }
    out
}

pub fn summary_json(report: &Report) -> Result<String, CliError> {
    serde_json::to_string_pretty(report).map_err(|e| CliError::Io(e.to_string()))
}

/// Write `<name>.csv` and `<name>.json` into `dir`; returns both paths.
pub fn write(report: &Report, dir: &Path) -> Result<(PathBuf, PathBuf), CliError> {
    let io = |p: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let name = &report.scenario.name;
    let csv_path = dir.join(format!("{name}.csv"));
    let json_path = dir.join(format!("{name}.json"));
    let summary = summary_json(report)?;
    std::fs::write(&csv_path, csv(&report.rows)).map_err(|e| io(&csv_path, e))?;
    std::fs::write(&json_path, summary).map_err(|e| io(&json_path, e))?;
    Ok((csv_path, json_path))
}
