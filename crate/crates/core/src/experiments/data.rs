//! CSV ingestion and the bundled air-quality fixture.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// What to do with a row containing an empty or `NA` cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MissingPolicy {
    /// Complete-case analysis: skip the row and count it.
    #[default]
    DropRow,
    /// Treat a missing cell like any other unparseable cell.
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub data: Dataset,
    /// Rows skipped for missing values.
    pub dropped: usize,
}

const AIRQUALITY_CSV: &str = include_str!("../../data/airquality.csv");

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

/// Reads a headed CSV file; the response column is `response` and every
/// other column becomes a covariate, in file order.
pub fn load_csv(path: impl AsRef<Path>, response: &str, policy: MissingPolicy) -> Result<LoadedData> {
    read_csv(std::fs::File::open(path)?, response, policy)
}

pub fn read_csv<R: Read>(reader: R, response: &str, policy: MissingPolicy) -> Result<LoadedData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let resp_col = header
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::InvalidData(format!("response column {response:?} not found")))?;
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != resp_col)
        .map(|(_, h)| h.clone())
        .collect();

    let (mut ys, mut rows, mut dropped) = (Vec::new(), Vec::new(), 0);
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        // line number in the file, counting the header as line 1
        let line = i + 2;
        if policy == MissingPolicy::DropRow && record.iter().any(is_missing) {
            dropped += 1;
            continue;
        }
        let mut values = Vec::with_capacity(header.len());
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line,
                column: header.get(j).cloned().unwrap_or_else(|| j.to_string()),
                message: format!("cannot parse {cell:?} as a number"),
            })?;
            if v.is_nan() {
                return Err(Error::Parse {
                    row: line,
                    column: header[j].clone(),
                    message: "NaN value".into(),
                });
            }
            values.push(v);
        }
        ys.push(values.remove(resp_col));
        rows.push(values);
    }
    Ok(LoadedData {
        data: Dataset::new(names, response, ys, rows)?,
        dropped,
    })
}

/// The New York 1973 air-quality readings, complete cases only, with the
/// ozone response replaced by its cube root.
pub fn airquality() -> Result<LoadedData> {
    let loaded = read_csv(AIRQUALITY_CSV.as_bytes(), "Ozone", MissingPolicy::DropRow)?;
    Ok(LoadedData {
        data: loaded.data.map_responses(f64::cbrt),
        dropped: loaded.dropped,
    })
}
