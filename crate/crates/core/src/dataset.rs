//! Learning and test data: a real response and a fixed-width covariate
//! vector per row, stored row-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    column_names: Vec<String>,
    response_name: String,
    responses: Vec<f64>,
    covariates: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from per-row covariate vectors.
    ///
    /// Every row must have `column_names.len()` covariates and no value may be
    /// NaN (missing values are resolved at ingestion).
    pub fn new(
        column_names: Vec<String>,
        response_name: impl Into<String>,
        responses: Vec<f64>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let d = column_names.len();
        if d == 0 {
            return Err(Error::InvalidData("at least one covariate is required".into()));
        }
        if responses.len() != rows.len() {
            return Err(Error::InvalidData(format!(
                "{} responses for {} covariate rows",
                responses.len(),
                rows.len()
            )));
        }
        let mut covariates = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| v.is_nan()) {
                return Err(Error::InvalidData(format!("row {i} has a missing covariate")));
            }
            covariates.extend_from_slice(row);
        }
        if let Some(i) = responses.iter().position(|y| y.is_nan()) {
            return Err(Error::InvalidData(format!("row {i} has a missing response")));
        }
        Ok(Self {
            column_names,
            response_name: response_name.into(),
            responses,
            covariates,
        })
    }

    /// Convenience constructor with generated column names `x0, x1, ...`.
    pub fn from_rows(responses: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.first().map_or(1, Vec::len);
        let names = (0..d).map(|j| format!("x{j}")).collect();
        Self::new(names, "y", responses, rows)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Number of covariates.
    pub fn dim(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn response(&self, i: usize) -> f64 {
        self.responses[i]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.covariates[i * d..(i + 1) * d]
    }

    pub fn value(&self, i: usize, var: usize) -> f64 {
        self.covariates[i * self.dim() + var]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.covariates
            .chunks_exact(self.dim())
            .zip(self.responses.iter().copied())
    }

    /// Column index by name.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    /// Rows selected by index, duplicates allowed.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let d = self.dim();
        let mut covariates = Vec::with_capacity(indices.len() * d);
        let mut responses = Vec::with_capacity(indices.len());
        for &i in indices {
            covariates.extend_from_slice(self.row(i));
            responses.push(self.responses[i]);
        }
        Dataset {
            column_names: self.column_names.clone(),
            response_name: self.response_name.clone(),
            responses,
            covariates,
        }
    }

    /// Returns a copy with the given covariate column replaced.
    pub fn with_column(&self, var: usize, values: &[f64]) -> Dataset {
        assert_eq!(values.len(), self.len());
        let mut out = self.clone();
        let d = self.dim();
        for (i, &v) in values.iter().enumerate() {
            out.covariates[i * d + var] = v;
        }
        out
    }

    pub fn column(&self, var: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i, var)).collect()
    }

    pub fn map_responses(&self, f: impl Fn(f64) -> f64) -> Dataset {
        let mut out = self.clone();
        out.responses.iter_mut().for_each(|y| *y = f(*y));
        out
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        if self.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.dim(),
            });
        }
        Ok(())
    }
}
