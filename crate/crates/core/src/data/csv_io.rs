use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Where to split a loaded series into train and test rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// `split_index = floor(fraction * T)`.
    Fraction(f64),
    /// Explicit number of training rows.
    TrainRows(usize),
}

impl Default for Split {
    fn default() -> Self {
        Split::Fraction(0.8)
    }
}

impl Split {
    pub fn index(self, rows: usize) -> Result<usize> {
        match self {
            Split::Fraction(f) if f > 0.0 && f < 1.0 => Ok((f * rows as f64).floor() as usize),
            Split::Fraction(f) => Err(Error::BadSpec(format!("split fraction {f} outside (0, 1)"))),
            Split::TrainRows(n) => Ok(n),
        }
    }
}

fn parse_timestamp(s: &str) -> bool {
    DateTime::parse_from_rfc3339(s).is_ok()
        || NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S").is_ok()
        || NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").is_ok()
        || NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M").is_ok()
        || NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M").is_ok()
        || NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok()
}

/// Loads a CSV with a header row. A first column headed `timestamp` holds
/// ISO-8601 times and is skipped; every other column is a channel. Rows and
/// columns in parse errors are 0-based positions in the data section.
pub fn load_csv<S: Scalar>(
    path: impl AsRef<Path>,
    name: &str,
    frequency: &str,
    seasonal_period: usize,
    split: Split,
) -> Result<Dataset<S>> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let has_time = headers.get(0).is_some_and(|h| h.eq_ignore_ascii_case("timestamp"));
    let first = usize::from(has_time);
    let channels = headers.len().saturating_sub(first);
    if channels == 0 {
        return Err(Error::NoChannels);
    }

    let mut values = Vec::new();
    let mut rows = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let parse_err = |col: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            col,
            msg,
        };
        if record.len() != headers.len() {
            return Err(parse_err(record.len(), format!("expected {} fields", headers.len())));
        }
        if has_time && !parse_timestamp(&record[0]) {
            return Err(parse_err(0, format!("invalid timestamp {:?}", &record[0])));
        }
        for col in first..record.len() {
            let v: f64 = record[col]
                .parse()
                .map_err(|_| parse_err(col, format!("not a number: {:?}", &record[col])))?;
            if !v.is_finite() {
                return Err(parse_err(col, "non-finite value".into()));
            }
            values.push(S::of(v));
        }
        rows += 1;
    }
    if rows < 2 {
        return Err(Error::TooShort {
            path: path.to_path_buf(),
            rows,
        });
    }
    let values = Array2::from_shape_vec((rows, channels), values).expect("row-major fill");
    Dataset::new(name, values, frequency, seasonal_period, split.index(rows)?)
}

/// Writes a dataset as CSV with channel columns `c0, c1, ...`, preceded by a
/// `timestamp` column when `timestamps` is given (one entry per row).
/// Values use shortest round-trip formatting, so reloading is exact.
pub fn write_csv<S: Scalar>(d: &Dataset<S>, path: impl AsRef<Path>, timestamps: Option<&[String]>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(d, file, timestamps).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_csv_to<S: Scalar, W: Write>(d: &Dataset<S>, out: W, timestamps: Option<&[String]>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = Vec::new();
    if timestamps.is_some() {
        header.push("timestamp".into());
    }
    header.extend((0..d.channels()).map(|c| format!("c{c}")));
    w.write_record(&header)?;
    for (t, row) in d.values().rows().into_iter().enumerate() {
        let mut rec: Vec<String> = Vec::with_capacity(row.len() + 1);
        if let Some(ts) = timestamps {
            rec.push(ts.get(t).cloned().unwrap_or_default());
        }
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
