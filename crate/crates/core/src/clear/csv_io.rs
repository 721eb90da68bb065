use std::path::Path;

use super::{ClearError, Table};

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

/// Reads a table: first line holds the column names, every other line one
/// row of decimal integers.
pub fn read_table(path: &Path) -> Result<Table, ClearError> {
    let file = std::fs::File::open(path).map_err(|e| ClearError::Io { path: path_str(path), message: e.to_string() })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| ClearError::Parse { path: path_str(path), line: 1, message: e.to_string() })?;
    let schema: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    if schema.iter().all(|h| h.is_empty()) {
        return Err(ClearError::Parse { path: path_str(path), line: 1, message: "missing header row".into() });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| ClearError::Parse {
            path: path_str(path),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != schema.len() {
            return Err(ClearError::ArityMismatch {
                path: path_str(path),
                line,
                expected: schema.len(),
                found: record.len(),
            });
        }
        let row = record
            .iter()
            .map(|cell| {
                cell.trim().parse::<i64>().map_err(|_| ClearError::Parse {
                    path: path_str(path),
                    line,
                    message: format!("`{cell}` is not an integer"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(Table { schema, rows })
}

pub fn write_table(table: &Table, path: &Path) -> Result<(), ClearError> {
    let io = |e: csv::Error| ClearError::Io { path: path_str(path), message: e.to_string() };
    let mut writer = csv::Writer::from_path(path).map_err(io)?;
    writer.write_record(&table.schema).map_err(io)?;
    for row in &table.rows {
        writer.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
    }
    writer.flush().map_err(|e| ClearError::Io { path: path_str(path), message: e.to_string() })
}
