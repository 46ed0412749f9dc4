//! Published-table verification: recompute the accuracy-efficiency score of
//! each transcribed result row from its accuracy/length numbers and check it
//! against the printed score.
//!
//! The bundled transcription (`data/paper_tables.csv`) covers the ten
//! trained-method rows of the 4K results table at both model scales and the
//! five rows of the 8K results table. The default tolerance of 0.02 absorbs
//! the two-decimal rounding of the published accuracy, length, and score
//! values.

use std::path::Path;

use lead_core::metrics::{aes, AesWeights};
use serde::{Deserialize, Serialize};

use crate::config::{SimError, SimResult};

/// Transcription of the published tables shipped with the repository.
pub const BUNDLED_TABLES_CSV: &str = include_str!("../../../data/paper_tables.csv");

/// Verification tolerance matching the tables' two-decimal rounding.
pub const DEFAULT_TOLERANCE: f64 = 0.02;

/// One transcribed table row.
#[derive(Debug, Clone, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub acc: f64,
    pub len: f64,
    pub base_acc: f64,
    pub base_len: f64,
    pub printed_aes: f64,
}

/// Outcome of re-deriving one row's score.
#[derive(Debug, Clone, Serialize)]
pub struct RowReport {
    pub method: String,
    pub printed_aes: f64,
    pub computed_aes: f64,
    pub abs_error: f64,
    pub pass: bool,
}

/// Full verification report.
#[derive(Debug, Clone, Serialize)]
pub struct TableReport {
    pub tolerance: f64,
    pub rows: Vec<RowReport>,
    pub all_pass: bool,
}

fn parse_rows(text: &str) -> SimResult<Vec<TableRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let rows = reader
        .deserialize()
        .collect::<Result<Vec<TableRow>, _>>()
        .map_err(|e| SimError::validation(format!("malformed table csv: {e}")))?;
    if rows.is_empty() {
        return Err(SimError::validation("table csv has no rows"));
    }
    Ok(rows)
}

/// Verify rows parsed from CSV text.
pub fn verify_rows(text: &str, weights: &AesWeights, tolerance: f64) -> SimResult<TableReport> {
    let rows = parse_rows(text)?
        .into_iter()
        .map(|row| {
            let computed =
                aes(row.acc, row.len, row.base_acc, row.base_len, weights).map_err(SimError::from)?;
            let abs_error = (computed - row.printed_aes).abs();
            Ok(RowReport {
                method: row.method,
                printed_aes: row.printed_aes,
                computed_aes: computed,
                abs_error,
                pass: abs_error <= tolerance,
            })
        })
        .collect::<SimResult<Vec<_>>>()?;
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(TableReport {
        tolerance,
        rows,
        all_pass,
    })
}

/// Verify a table CSV on disk, or the bundled transcription when no path is
/// given.
pub fn verify_paper_tables(
    csv_path: Option<&Path>,
    weights: &AesWeights,
    tolerance: f64,
) -> SimResult<TableReport> {
    match csv_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| SimError::io(format!("reading table csv {}", path.display()), e))?;
            verify_rows(&text, weights, tolerance)
        }
        None => verify_rows(BUNDLED_TABLES_CSV, weights, tolerance),
    }
}

/// Render the report as an aligned text table.
pub fn format_report(report: &TableReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>10} {:>10} {:>10}  result\n",
        "method", "printed", "computed", "error"
    ));
    for row in &report.rows {
        out.push_str(&format!(
            "{:<24} {:>10.2} {:>10.4} {:>10.4}  {}\n",
            row.method,
            row.printed_aes,
            row.computed_aes,
            row.abs_error,
            if row.pass { "ok" } else { "FAIL" }
        ));
    }
    out.push_str(&format!(
        "{} of {} rows within {:.2}\n",
        report.rows.iter().filter(|r| r.pass).count(),
        report.rows.len(),
        report.tolerance
    ));
    out
}
