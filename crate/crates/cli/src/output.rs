//! CSV and JSON writers. The CSV depends only on the configuration; run
//! metadata such as the timestamp goes to the JSON sidecar.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;

use crate::config::OutputFormat;
use crate::error::CliError;
use crate::runner::{RunRecord, Table};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "PATHDEV_OUTPUT_DIR";

/// Header row, then one line per row with every value in `{:.16e}` (17
/// significant digits, independent of locale).
pub fn to_csv(table: &Table) -> String {
    let mut out = table.columns.join(",");
    out.push('\n');
    for row in &table.rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Files written for one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Written {
    pub csv: Option<PathBuf>,
    pub sidecar: PathBuf,
}

/// Writes `<stem>.csv` and the `<stem>.json` sidecar (CSV format), or only
/// `<stem>.json` with the rows embedded (JSON format).
pub fn write_record(record: &RunRecord, dir: &Path, stem: &str, format: OutputFormat) -> Result<Written, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Write {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let sidecar = dir.join(format!("{stem}.json"));
    let mut meta = serde_json::to_value(record).expect("record serialises");
    meta["timestamp_unix"] = json!(timestamp);
    let csv = match format {
        OutputFormat::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            write_file(&path, &to_csv(&record.table))?;
            meta.as_object_mut().expect("object").remove("rows");
            meta["csv"] = json!(path.file_name().map(|f| f.to_string_lossy().into_owned()));
            Some(path)
        }
        OutputFormat::Json => None,
    };
    let mut text = serde_json::to_string_pretty(&meta).expect("json");
    let _ = writeln!(text);
    write_file(&sidecar, &text)?;
    Ok(Written { csv, sidecar })
}
