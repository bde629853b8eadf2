//! CSV ingestion and emission with a JSON-described schema.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::RawSample;
use crate::error::{Error, Result};

/// Column layout of a CSV file. Field names must match the header; when no
/// timestamp column exists the row order is taken as temporal.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    pub categorical: Vec<String>,
    pub numerical: Vec<String>,
    pub label: String,
    #[serde(default)]
    pub click: Option<String>,
    #[serde(default)]
    pub timestamp: Option<String>,
    #[serde(default = "default_threshold")]
    pub vocab_threshold: u32,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_threshold() -> u32 {
    10
}

fn default_delimiter() -> char {
    ','
}

impl SchemaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.categorical.is_empty() && self.numerical.is_empty() {
            return Err(Error::Schema("schema declares no feature columns".into()));
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::Schema("delimiter must be an ASCII character".into()));
        }
        Ok(())
    }
}

/// Write samples with a header row. Numerical values use shortest
/// round-trip formatting, so a load after a write is bit-equal.
pub fn write_csv(path: &Path, rows: &[RawSample], schema: &SchemaConfig) -> Result<()> {
    schema.validate()?;
    let mut w = csv::WriterBuilder::new()
        .delimiter(schema.delimiter as u8)
        .from_path(path)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let mut header: Vec<String> = Vec::new();
    header.extend(schema.categorical.iter().cloned());
    header.extend(schema.numerical.iter().cloned());
    header.push(schema.label.clone());
    if let Some(c) = &schema.click {
        header.push(c.clone());
    }
    if let Some(t) = &schema.timestamp {
        header.push(t.clone());
    }
    w.write_record(&header).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for (i, r) in rows.iter().enumerate() {
        if r.cat.len() != schema.categorical.len() || r.num.len() != schema.numerical.len() {
            return Err(Error::Schema(format!("row {i} does not match the schema arity")));
        }
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        rec.extend(r.cat.iter().cloned());
        rec.extend(r.num.iter().map(|x| format!("{x}")));
        rec.push(format!("{}", r.label));
        if schema.click.is_some() {
            rec.push(format!("{}", r.click.unwrap_or(0.0)));
        }
        if schema.timestamp.is_some() {
            rec.push(format!("{}", r.ts));
        }
        w.write_record(&rec).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

/// Load typed samples. Parse failures name the offending row and column.
pub fn load_csv(path: &Path, schema: &SchemaConfig) -> Result<Vec<RawSample>> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .from_path(path)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("{}: cannot read header: {e}", path.display())))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}' in {}", path.display())))
    };
    let cat_cols: Vec<usize> =
        schema.categorical.iter().map(|n| col(n)).collect::<Result<_>>()?;
    let num_cols: Vec<usize> = schema.numerical.iter().map(|n| col(n)).collect::<Result<_>>()?;
    let label_col = col(&schema.label)?;
    let click_col = schema.click.as_ref().map(|n| col(n)).transpose()?;
    let ts_col = schema.timestamp.as_ref().map(|n| col(n)).transpose()?;

    let mut out = Vec::new();
    for (row_idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            Error::Data(format!("{}: row {}: {e}", path.display(), row_idx + 1))
        })?;
        let parse_f64 = |c: usize| -> Result<f64> {
            rec.get(c)
                .ok_or_else(|| Error::Data(format!("row {}: missing cell {c}", row_idx + 1)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| {
                    Error::Data(format!(
                        "{}: row {}, column '{}': {e}",
                        path.display(),
                        row_idx + 1,
                        headers.get(c).unwrap_or("?")
                    ))
                })
        };
        let cat = cat_cols
            .iter()
            .map(|&c| {
                rec.get(c)
                    .map(|s| s.to_string())
                    .ok_or_else(|| Error::Data(format!("row {}: missing cell {c}", row_idx + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        let num = num_cols.iter().map(|&c| parse_f64(c)).collect::<Result<Vec<_>>>()?;
        let label = parse_f64(label_col)?;
        let click = click_col.map(parse_f64).transpose()?;
        let ts = match ts_col {
            Some(c) => rec
                .get(c)
                .unwrap_or("")
                .trim()
                .parse::<i64>()
                .map_err(|e| {
                    Error::Data(format!("{}: row {}, timestamp: {e}", path.display(), row_idx + 1))
                })?,
            None => row_idx as i64,
        };
        out.push(RawSample { cat, num, label, click, ts });
    }
    Ok(out)
}
