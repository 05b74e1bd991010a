//! CSV and JSON file helpers shared by the command-line tools.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{EventTable, Label};

fn csv_error(path: &Path, e: impl ToString) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report types serialize");
    write_text(path, &(text + "\n"))
}

/// Matrix as CSV with a `c1..cN` header; values use the shortest exact decimal form.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record((1..=m.ncols()).map(|c| format!("c{c}")))
        .expect("in-memory write");
    for r in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|c| m[(r, c)].to_string()))
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    write_text(path, &matrix_to_csv(m))
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| csv_error(path, format!("row {}: `{s}`: {e}", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(csv_error(path, "matrix is empty"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

#[derive(Debug, Deserialize)]
struct EventRecord {
    onset: f64,
    duration: f64,
    label: Label,
}

/// Events from a CSV with columns `onset,duration,label`, one row per trial in regressor order.
pub fn read_events_csv(path: impl AsRef<Path>, n_scans: usize, tr: f64) -> Result<EventTable> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let onsets = rdr
        .deserialize::<EventRecord>()
        .map(|r| {
            r.map(|e| (e.onset, e.duration, e.label))
                .map_err(|e| csv_error(path, e))
        })
        .collect::<Result<Vec<_>>>()?;
    EventTable::from_onsets(&onsets, n_scans, tr)
}

pub fn events_to_csv(events: &EventTable) -> String {
    let mut out = String::from("onset,duration,label\n");
    for e in events.events() {
        out.push_str(&format!("{},{},{}\n", e.onset, e.duration, e.label));
    }
    out
}
