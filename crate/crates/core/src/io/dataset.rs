//! Time-rows CSV datasets.
//!
//! ```text
//! # sample_rate: 160
//! Fz,Cz,Pz
//! 0.12,-0.40,1.5
//! ...
//! ```
//!
//! The sample-rate line is optional. Values are written with the shortest
//! representation that parses back to the same double.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::TimeSeriesMatrix;
use crate::scalar::Scalar;

const RATE_KEY: &str = "sample_rate";

pub fn load_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<TimeSeriesMatrix<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

/// Parse dataset text. Parse errors carry an empty path.
pub fn parse_csv<T: Scalar>(text: &str) -> Result<TimeSeriesMatrix<T>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: Default::default(),
        line,
        message,
    };
    let mut body = text;
    let mut skipped = 0;
    let mut sample_rate = None;
    if let Some(first) = text.lines().next() {
        if let Some(rest) = first.trim_start().strip_prefix('#') {
            let rate = rest
                .split_once(':')
                .filter(|(k, _)| k.trim() == RATE_KEY)
                .map(|(_, v)| v.trim().parse::<f64>());
            match rate {
                Some(Ok(r)) if r.is_finite() && r > 0.0 => sample_rate = Some(r),
                _ => return Err(parse_err(1, format!("expected `# {RATE_KEY}: <positive number>`"))),
            }
            body = text.split_once('\n').map_or("", |(_, b)| b);
            skipped = 1;
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let labels: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(skipped + 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if labels.is_empty() || labels.iter().all(String::is_empty) {
        return Err(parse_err(skipped + 1, "missing header row".into()));
    }
    let width = labels.len();

    let mut columns: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize + skipped);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize) + skipped;
        if record.len() != width {
            return Err(parse_err(
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                parse_err(line, format!("column {} ({}): `{cell}` is not a number", col + 1, labels[col]))
            })?;
            if !v.is_finite() {
                return Err(parse_err(
                    line,
                    format!("column {} ({}): non-finite value", col + 1, labels[col]),
                ));
            }
            columns.push(v);
        }
        rows += 1;
    }
    if rows < 2 {
        return Err(Error::TooShort { needed: 2, got: rows });
    }
    // stored row-major by time, i.e. column-major for channels × time
    let values = DMatrix::from_column_slice(width, rows, &columns).map(T::lit);
    let mut series = TimeSeriesMatrix::new(values)?.with_labels(labels)?;
    series.sample_rate = sample_rate;
    Ok(series)
}

pub fn to_csv_string<T: Scalar>(series: &TimeSeriesMatrix<T>) -> String {
    let mut out = String::new();
    if let Some(rate) = series.sample_rate {
        out.push_str(&format!("# {RATE_KEY}: {rate}\n"));
    }
    let labels: Vec<String> = (0..series.channels()).map(|c| series.label(c)).collect();
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    // writing into memory cannot fail
    w.write_record(&labels).expect("in-memory csv");
    let v = series.values();
    for t in 0..series.len() {
        w.write_record((0..series.channels()).map(|c| format!("{}", v[(c, t)].as_f64())))
            .expect("in-memory csv");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv"));
    out
}

pub fn save_csv<T: Scalar>(path: impl AsRef<Path>, series: &TimeSeriesMatrix<T>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_csv_string(series)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
