//! Consolidated report emission: one CSV table and a JSON mirror holding the
//! same decimal strings, so every numeric cell agrees bit-for-bit.

use nsscale_core::norms::{ReportRow, CSV_HEADER};
use serde_json::json;
use std::fs;
use std::io::Write;
use std::path::Path;

pub fn write_task_csv(path: &Path, rows: &[ReportRow]) -> std::io::Result<()> {
    let mut file = fs::File::create(path)?;
    writeln!(file, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(file, "{}", row.csv_line())?;
    }
    Ok(())
}

/// Consolidated CSV with a leading task tag column.
pub fn write_consolidated(
    dir: &Path,
    tagged: &[(String, Vec<ReportRow>)],
) -> std::io::Result<(String, String)> {
    let csv_name = "report.csv".to_string();
    let json_name = "report.json".to_string();
    let mut csv = String::new();
    csv.push_str("task,");
    csv.push_str(CSV_HEADER);
    csv.push('\n');
    let mut json_rows = Vec::new();
    for (tag, rows) in tagged {
        for row in rows {
            let line = row.csv_line();
            csv.push_str(tag);
            csv.push(',');
            csv.push_str(&line);
            csv.push('\n');
            let mut cells: Vec<String> = vec![tag.clone()];
            cells.extend(line.split(',').map(|s| s.to_string()));
            json_rows.push(cells);
        }
    }
    fs::write(dir.join(&csv_name), &csv)?;
    let header: Vec<String> = std::iter::once("task".to_string())
        .chain(CSV_HEADER.split(',').map(|s| s.to_string()))
        .collect();
    let mirror = json!({ "header": header, "rows": json_rows });
    fs::write(dir.join(&json_name), serde_json::to_string_pretty(&mirror).unwrap())?;
    Ok((csv_name, json_name))
}
