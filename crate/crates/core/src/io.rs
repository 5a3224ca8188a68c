//! CSV / JSON result files.
//!
//! Files are written to a temporary sibling and renamed into place, so a
//! failed run never leaves a truncated file behind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::error::{Error, Result};
use crate::experiment::TableRow;
use crate::influence::InfluenceRecord;

pub const TABLE_HEADER: &str =
    "n,p,lambda,df_ratio,tau_new_mean,tau_new_std,tau_if_mean,tau_if_std,tau_corrected_mean,tau_corrected_std";
pub const RECORD_HEADER: &str = "train_index,test_index,h_ii,i_true,i_if,i_if_corrected,i_new";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::invalid(format!("unknown format '{s}'"))),
        }
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn format_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn format_opt(x: Option<f64>) -> String {
    x.map(format_real).unwrap_or_default()
}

fn table_line(r: &TableRow) -> String {
    [
        r.n.to_string(),
        r.p.to_string(),
        format_real(r.lambda),
        format_real(r.df_ratio),
        format_opt(r.tau_new_mean),
        format_opt(r.tau_new_std),
        format_opt(r.tau_if_mean),
        format_opt(r.tau_if_std),
        format_opt(r.tau_corrected_mean),
        format_opt(r.tau_corrected_std),
    ]
    .join(",")
}

fn record_line(r: &InfluenceRecord) -> String {
    [
        r.train_index.to_string(),
        r.test_index.to_string(),
        format_real(r.h_ii),
        format_opt(r.i_true),
        format_real(r.i_if),
        format_real(r.i_if_corrected),
        format_real(r.i_new),
    ]
    .join(",")
}

#[derive(Serialize, Deserialize)]
struct TableRowJson {
    n: usize,
    p: usize,
    lambda: f64,
    df_ratio: f64,
    tau_new_mean: Option<f64>,
    tau_new_std: Option<f64>,
    tau_if_mean: Option<f64>,
    tau_if_std: Option<f64>,
    tau_corrected_mean: Option<f64>,
    tau_corrected_std: Option<f64>,
}

impl From<&TableRow> for TableRowJson {
    fn from(r: &TableRow) -> Self {
        Self {
            n: r.n,
            p: r.p,
            lambda: r.lambda,
            df_ratio: r.df_ratio,
            tau_new_mean: r.tau_new_mean,
            tau_new_std: r.tau_new_std,
            tau_if_mean: r.tau_if_mean,
            tau_if_std: r.tau_if_std,
            tau_corrected_mean: r.tau_corrected_mean,
            tau_corrected_std: r.tau_corrected_std,
        }
    }
}

impl From<TableRowJson> for TableRow {
    fn from(r: TableRowJson) -> Self {
        Self {
            n: r.n,
            p: r.p,
            lambda: r.lambda,
            df_ratio: r.df_ratio,
            tau_new_mean: r.tau_new_mean,
            tau_new_std: r.tau_new_std,
            tau_if_mean: r.tau_if_mean,
            tau_if_std: r.tau_if_std,
            tau_corrected_mean: r.tau_corrected_mean,
            tau_corrected_std: r.tau_corrected_std,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RecordJson {
    train_index: usize,
    test_index: usize,
    h_ii: f64,
    i_true: Option<f64>,
    i_if: f64,
    i_if_corrected: f64,
    i_new: f64,
}

impl From<&InfluenceRecord> for RecordJson {
    fn from(r: &InfluenceRecord) -> Self {
        Self {
            train_index: r.train_index,
            test_index: r.test_index,
            h_ii: r.h_ii,
            i_true: r.i_true,
            i_if: r.i_if,
            i_if_corrected: r.i_if_corrected,
            i_new: r.i_new,
        }
    }
}

impl From<RecordJson> for InfluenceRecord {
    fn from(r: RecordJson) -> Self {
        Self {
            train_index: r.train_index,
            test_index: r.test_index,
            i_true: r.i_true,
            i_if: r.i_if,
            i_if_corrected: r.i_if_corrected,
            i_new: r.i_new,
            h_ii: r.h_ii,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `contents` atomically to `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| io_err(path, e))?;
    tmp.write_all(contents).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

fn csv_body(header: &str, lines: impl Iterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for line in lines {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn json_body<T: Serialize>(path: &Path, items: &[T]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(items).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    s.push('\n');
    Ok(s)
}

pub fn write_table(path: &Path, rows: &[TableRow], format: Format) -> Result<()> {
    let body = match format {
        Format::Csv => csv_body(TABLE_HEADER, rows.iter().map(table_line)),
        Format::Json => {
            let items: Vec<TableRowJson> = rows.iter().map(Into::into).collect();
            json_body(path, &items)?
        }
    };
    write_atomic(path, body.as_bytes())
}

pub fn write_records(path: &Path, records: &[InfluenceRecord], format: Format) -> Result<()> {
    let body = match format {
        Format::Csv => csv_body(RECORD_HEADER, records.iter().map(record_line)),
        Format::Json => {
            let items: Vec<RecordJson> = records.iter().map(Into::into).collect();
            json_body(path, &items)?
        }
    };
    write_atomic(path, body.as_bytes())
}

/// Writes the table file and, when a path is given, the records file.
pub fn write_results(
    rows: &[TableRow],
    records: &[InfluenceRecord],
    format: Format,
    table_path: &Path,
    records_path: Option<&Path>,
) -> Result<()> {
    write_table(table_path, rows, format)?;
    if let Some(p) = records_path {
        write_records(p, records, format)?;
    }
    Ok(())
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn parse_field<T: FromStr>(path: &Path, field: &str, name: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| format_err(path, format!("bad value '{field}' for {name}")))
}

fn parse_opt(path: &Path, field: &str, name: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_field(path, field, name).map(Some)
    }
}

fn csv_rows(path: &Path, header: &str) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| format_err(path, e.to_string()))?;
    let found = reader
        .headers()
        .map_err(|e| format_err(path, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if found != header {
        return Err(format_err(path, format!("unexpected header '{found}'")));
    }
    reader
        .records()
        .map(|r| r.map_err(|e| format_err(path, e.to_string())))
        .collect()
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

pub fn read_table(path: &Path, format: Format) -> Result<Vec<TableRow>> {
    if format == Format::Json {
        return Ok(read_json::<TableRowJson>(path)?
            .into_iter()
            .map(Into::into)
            .collect());
    }
    csv_rows(path, TABLE_HEADER)?
        .iter()
        .map(|r| {
            Ok(TableRow {
                n: parse_field(path, &r[0], "n")?,
                p: parse_field(path, &r[1], "p")?,
                lambda: parse_field(path, &r[2], "lambda")?,
                df_ratio: parse_field(path, &r[3], "df_ratio")?,
                tau_new_mean: parse_opt(path, &r[4], "tau_new_mean")?,
                tau_new_std: parse_opt(path, &r[5], "tau_new_std")?,
                tau_if_mean: parse_opt(path, &r[6], "tau_if_mean")?,
                tau_if_std: parse_opt(path, &r[7], "tau_if_std")?,
                tau_corrected_mean: parse_opt(path, &r[8], "tau_corrected_mean")?,
                tau_corrected_std: parse_opt(path, &r[9], "tau_corrected_std")?,
            })
        })
        .collect()
}

pub fn read_records(path: &Path, format: Format) -> Result<Vec<InfluenceRecord>> {
    if format == Format::Json {
        return Ok(read_json::<RecordJson>(path)?
            .into_iter()
            .map(Into::into)
            .collect());
    }
    csv_rows(path, RECORD_HEADER)?
        .iter()
        .map(|r| {
            Ok(InfluenceRecord {
                train_index: parse_field(path, &r[0], "train_index")?,
                test_index: parse_field(path, &r[1], "test_index")?,
                h_ii: parse_field(path, &r[2], "h_ii")?,
                i_true: parse_opt(path, &r[3], "i_true")?,
                i_if: parse_field(path, &r[4], "i_if")?,
                i_if_corrected: parse_field(path, &r[5], "i_if_corrected")?,
                i_new: parse_field(path, &r[6], "i_new")?,
            })
        })
        .collect()
}
