//! CSV and metadata writers shared by the simulation and evaluation
//! harnesses.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! every emitted CSV parses back to bit-identical values and reruns with
//! the same seed produce byte-identical files.

use crate::error::{Error, Result};
use crate::simulation::{RepFailure, ScoreName, ScoreRecord};
use nalgebra::DMatrix;
use std::io::Write;
use std::path::Path;

const RECORD_HEADER: [&str; 6] = [
    "replication",
    "method",
    "covariance",
    "score",
    "series",
    "value",
];

/// Serializes score records to CSV text (header + one row per record).
pub fn records_to_csv_string(records: &[ScoreRecord]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(RECORD_HEADER).expect("in-memory write");
    for r in records {
        wtr.write_record(&[
            r.replication.to_string(),
            r.method.clone(),
            r.covariance_kind.clone(),
            r.score_name.to_string(),
            r.series_label.clone(),
            r.value.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn write_records_csv(records: &[ScoreRecord], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, records_to_csv_string(records))?;
    Ok(())
}

/// Parses records back from the CSV produced by [`records_to_csv_string`].
pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        if row.len() != 6 {
            return Err(Error::InvalidParameter(format!(
                "records row {i} has {} fields, expected 6",
                row.len()
            )));
        }
        let parse_err = |what: &str| {
            Error::InvalidParameter(format!("records row {i}: bad {what} `{}`", &row[5]))
        };
        out.push(ScoreRecord {
            replication: row[0]
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("records row {i}: bad replication")))?,
            method: row[1].to_string(),
            covariance_kind: row[2].to_string(),
            score_name: ScoreName::parse(&row[3])?,
            series_label: row[4].to_string(),
            value: row[5].parse().map_err(|_| parse_err("value"))?,
        });
    }
    Ok(out)
}

pub fn write_failures_csv(failures: &[RepFailure], path: impl AsRef<Path>) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["replication", "method", "covariance", "reason"])?;
    for f in failures {
        wtr.write_record(&[
            f.replication.to_string(),
            f.method.clone(),
            f.covariance_kind.clone(),
            f.reason.clone(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `key: value` lines describing a run, in the given order.
pub fn write_metadata(pairs: &[(String, String)], path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for (k, v) in pairs {
        writeln!(file, "{k}: {v}")?;
    }
    Ok(())
}

/// Reads a CSV whose header names columns and whose body is numeric.
pub fn read_labeled_matrix_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let labels: Vec<String> = rdr.headers()?.iter().map(|h| h.to_string()).collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(labels.len());
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
                row: i + 2,
                column: labels.get(j).cloned().unwrap_or_default(),
            })?;
            row.push(value);
        }
        if row.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "CSV row width",
                expected: labels.len(),
                actual: row.len(),
            });
        }
        rows.push(row);
    }
    let mat = DMatrix::from_fn(rows.len(), labels.len(), |i, j| rows[i][j]);
    Ok((labels, mat))
}

/// Writes a labeled numeric matrix as CSV (header + rows).
pub fn write_labeled_matrix_csv(
    labels: &[String],
    matrix: &DMatrix<f64>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(labels)?;
    for i in 0..matrix.nrows() {
        let row: Vec<String> = (0..matrix.ncols()).map(|j| matrix[(i, j)].to_string()).collect();
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reorders the columns of a labeled matrix to match `want`; errors on a
/// missing label. Extra columns are dropped.
pub fn align_columns(
    labels: &[String],
    matrix: &DMatrix<f64>,
    want: &[String],
) -> Result<DMatrix<f64>> {
    let order: Vec<usize> = want
        .iter()
        .map(|label| {
            labels
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| Error::MissingColumn(label.clone()))
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(matrix.nrows(), want.len(), |i, j| {
        matrix[(i, order[j])]
    }))
}
