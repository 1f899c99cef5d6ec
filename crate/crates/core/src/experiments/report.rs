//! Association tables and their CSV/JSON serializations.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiments::protocol::ProtocolConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationRow {
    /// `"v:w"` for a pair.
    pub label: String,
    pub paired: f64,
    pub additive: f64,
    pub association: f64,
    pub standardized: f64,
}

impl AssociationRow {
    pub fn new(label: impl Into<String>, paired: f64, additive: f64, reference_mse: f64) -> Self {
        let association = paired - additive;
        Self {
            label: label.into(),
            paired,
            additive,
            association,
            standardized: association / reference_mse * 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleImportance {
    pub variable: String,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationTable {
    pub rows: Vec<AssociationRow>,
    /// Averaged single-variable importances, in table order.
    #[serde(default)]
    pub singles: Vec<SingleImportance>,
    pub reference_mse: f64,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ProtocolConfig>,
    /// Free-text provenance lines (data handling, permutation scheme).
    #[serde(default)]
    pub notes: Vec<String>,
}

impl AssociationTable {
    pub fn row(&self, label: &str) -> Option<&AssociationRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Row labels sorted by standardized association, largest first.
    pub fn ranking(&self) -> Vec<&str> {
        let mut rows: Vec<&AssociationRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| b.standardized.total_cmp(&a.standardized));
        rows.into_iter().map(|r| r.label.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    /// `json` for a `.json` extension, CSV otherwise.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => ReportFormat::Json,
            _ => ReportFormat::Csv,
        }
    }
}

pub const CSV_HEADER: &str = "pair,paired,additive,association,assoc_per_mse";

pub fn emit_report<W: Write>(table: &AssociationTable, format: ReportFormat, mut out: W) -> Result<()> {
    match format {
        ReportFormat::Csv => {
            writeln!(out, "{CSV_HEADER}")?;
            for r in &table.rows {
                writeln!(
                    out,
                    "{},{:.6},{:.6},{:.6},{:.6}",
                    r.label, r.paired, r.additive, r.association, r.standardized
                )?;
            }
        }
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, table)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_report(table: &AssociationTable, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    emit_report(table, ReportFormat::from_path(path), std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: Vec<AssociationRow>) -> AssociationTable {
        AssociationTable {
            rows,
            singles: vec![],
            reference_mse: 1.0,
            replicates: 1,
            seed: 7,
            config: Some(ProtocolConfig::default()),
            notes: vec!["complete cases".into()],
        }
    }

    fn csv(t: &AssociationTable) -> String {
        let mut buf = Vec::new();
        emit_report(t, ReportFormat::Csv, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(csv(&table(vec![])), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn six_decimals() {
        let row = AssociationRow {
            label: "Temp:Wind".into(),
            paired: 0.706,
            additive: 0.600,
            association: 0.106,
            standardized: 11.351,
        };
        assert_eq!(
            csv(&table(vec![row])).lines().nth(1).unwrap(),
            "Temp:Wind,0.706000,0.600000,0.106000,11.351000"
        );
    }

    #[test]
    fn json_round_trip() {
        let t = table(vec![AssociationRow::new("a:b", 1.0 / 3.0, 0.1, 0.7)]);
        let mut buf = Vec::new();
        emit_report(&t, ReportFormat::Json, &mut buf).unwrap();
        let back: AssociationTable = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn row_arithmetic() {
        let r = AssociationRow::new("a:b", 3.0, 1.0, 4.0);
        assert_eq!((r.association, r.standardized), (2.0, 50.0));
    }

    #[test]
    fn unwritable_destination() {
        let t = table(vec![]);
        assert!(write_report(&t, std::path::Path::new("/nonexistent-dir/x/report.csv")).is_err());
    }
}
