//! Numeric CSV tables: an optional leading date column plus one numeric
//! column per series.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use crate::error::{config_err, data_err, CliResult, WithCode, EXIT_DATA};

#[derive(Debug, Clone)]
pub struct Table {
    pub dates: Option<Vec<String>>,
    pub names: Vec<String>,
    pub n: usize,
    pub d: usize,
    /// Row-major `n x d`.
    pub values: Vec<f64>,
}

fn is_iso_date(s: &str) -> bool {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok()
        || NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S").is_ok()
        || DateTime::parse_from_rfc3339(s).is_ok()
}

const MAX_REPORTED: usize = 20;

impl Table {
    /// Read a table. The first column is taken as dates when its header is
    /// `date` (any case); every date must then be ISO-8601. Every bad cell is
    /// collected and reported together.
    pub fn read(path: &Path) -> CliResult<Table> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .code(EXIT_DATA, format!("cannot open {}", path.display()))?;
        let headers: Vec<String> = rdr.headers().code(EXIT_DATA, format!("{}: bad header", path.display()))?.iter().map(String::from).collect();
        let has_dates = headers.first().is_some_and(|h| h.eq_ignore_ascii_case("date"));
        let offset = usize::from(has_dates);
        let names = headers[offset..].to_vec();
        if names.is_empty() {
            return Err(data_err(format!("{}: no data columns", path.display())));
        }
        let d = names.len();
        let mut values = Vec::new();
        let mut dates = Vec::new();
        let mut problems = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            // line numbers count the header as line 1
            let line = r + 2;
            let rec = rec.code(EXIT_DATA, format!("{}: line {line}", path.display()))?;
            if rec.len() != headers.len() {
                problems.push(format!("line {line}: {} fields, expected {}", rec.len(), headers.len()));
                continue;
            }
            if has_dates {
                if !is_iso_date(&rec[0]) {
                    problems.push(format!("line {line}, column date: '{}' is not an ISO-8601 date", &rec[0]));
                }
                dates.push(rec[0].to_string());
            }
            for (j, cell) in rec.iter().skip(offset).enumerate() {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(v),
                    _ => {
                        problems.push(format!("line {line}, column {}: '{cell}' is not a finite number", names[j]));
                        values.push(f64::NAN);
                    }
                }
            }
        }
        if !problems.is_empty() {
            let shown: Vec<&str> = problems.iter().take(MAX_REPORTED).map(String::as_str).collect();
            let more = problems.len().saturating_sub(MAX_REPORTED);
            let tail = if more > 0 { format!("\n  ... and {more} more") } else { String::new() };
            return Err(data_err(format!("{}: {} unparseable cell(s)\n  {}{tail}", path.display(), problems.len(), shown.join("\n  "))));
        }
        let n = values.len() / d;
        if n == 0 {
            return Err(data_err(format!("{}: no data rows", path.display())));
        }
        Ok(Table { dates: has_dates.then_some(dates), names, n, d, values })
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|t| self.values[t * self.d + j]).collect()
    }

    /// Keep only the named columns, in the given order.
    pub fn select(self, columns: Option<&[String]>) -> CliResult<Table> {
        let Some(cols) = columns else { return Ok(self) };
        let idx: Vec<usize> = cols
            .iter()
            .map(|c| self.names.iter().position(|n| n == c).ok_or_else(|| config_err(format!("column '{c}' not found"))))
            .collect::<CliResult<_>>()?;
        let values = (0..self.n).flat_map(|t| idx.iter().map(move |&j| (t, j))).map(|(t, j)| self.values[t * self.d + j]).collect();
        Ok(Table { dates: self.dates, names: cols.to_vec(), n: self.n, d: idx.len(), values })
    }

    /// Write with `fmt` applied to every value.
    pub fn write(&self, path: &Path, fmt: impl Fn(f64) -> String) -> CliResult<()> {
        let file = File::create(path).code(EXIT_DATA, format!("cannot create {}", path.display()))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let mut header: Vec<&str> = Vec::with_capacity(self.d + 1);
        if self.dates.is_some() {
            header.push("date");
        }
        header.extend(self.names.iter().map(String::as_str));
        w.write_record(&header).code(EXIT_DATA, path.display())?;
        let mut rec: Vec<String> = Vec::with_capacity(self.d + 1);
        for t in 0..self.n {
            rec.clear();
            if let Some(dates) = &self.dates {
                rec.push(dates[t].clone());
            }
            rec.extend(self.values[t * self.d..(t + 1) * self.d].iter().map(|&v| fmt(v)));
            w.write_record(&rec).code(EXIT_DATA, path.display())?;
        }
        w.into_inner().map_err(|e| data_err(format!("{}: {e}", path.display())))?.flush().code(EXIT_DATA, path.display())?;
        Ok(())
    }
}

/// Serialize `rows` as CSV with a header from the field names.
pub fn write_rows<T: serde::Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).code(EXIT_DATA, format!("cannot create {}", path.display()))?;
    for r in rows {
        w.serialize(r).code(EXIT_DATA, path.display())?;
    }
    w.flush().code(EXIT_DATA, path.display())?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).code(EXIT_DATA, "serializing JSON")?;
    std::fs::write(path, text + "\n").code(EXIT_DATA, format!("cannot write {}", path.display()))
}
