//! Small numeric CSV tables with line-numbered parse errors.

use std::path::Path;

use crate::error::{Error, Result};

/// Read a file, mapping a missing file to [`Error::NotFound`].
pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parse a CSV with the given header into rows of numbers. Empty cells become NaN
/// only in columns listed in `optional`.
pub(crate) fn parse_numeric(path: &Path, text: &str, header: &[&str], optional: &[usize]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut seen_header = false;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if !seen_header {
            let got: Vec<&str> = record.iter().map(str::trim).collect();
            if got != header {
                return Err(parse_error(
                    path,
                    line,
                    format!("expected header {:?}, found {:?}", header.join(","), got.join(",")),
                ));
            }
            seen_header = true;
            continue;
        }
        if record.len() != header.len() {
            return Err(parse_error(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(i, cell)| {
                let cell = cell.trim();
                if cell.is_empty() && optional.contains(&i) {
                    return Ok(f64::NAN);
                }
                cell.parse::<f64>()
                    .map_err(|_| parse_error(path, line, format!("column {:?}: cannot parse {cell:?}", header[i])))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if !seen_header {
        return Err(parse_error(path, 1, "file is empty"));
    }
    if !text.is_empty() && !text.ends_with('\n') {
        let line = text.lines().count() as u64;
        return Err(parse_error(path, line, "truncated final line"));
    }
    Ok(rows)
}

/// Format a float so that parsing it back yields the same bits.
pub(crate) fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}
