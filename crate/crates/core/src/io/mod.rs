//! Scenario files, command-line overrides, sweep axes and result files.

mod overrides;
mod results;
mod scenario_file;
mod sweep;

pub use overrides::{apply_overrides, parse_override, Override};
pub use results::{
    analytic_csv, analytic_rows_csv, comparison_csv, fmt_num, load_profile, read_comparison_csv, sim_csv, slot_csv,
    write_file, CsvRow, COMPARISON_HEADER,
};
pub use scenario_file::{emit_scenario, load_scenario, parse_scenario, ParseOptions, Parsed};
pub use sweep::{grid, parse_axis, Axis};

use std::path::PathBuf;

use thiserror::Error;

use crate::model::ValidationReport;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    /// A field is missing, mistyped or out of range.
    #[error("{}{message}", location.map(|(l, c)| format!("line {l}, column {c}: ")).unwrap_or_default())]
    Field { location: Option<(usize, usize)>, message: String },
    #[error("unknown key(s): {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("scenario is not valid:\n{0}")]
    Semantic(ValidationReport),
    #[error("bad override `{0}`")]
    Override(String),
    #[error("bad sweep axis `{0}`")]
    Axis(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// 1-based line and column of a byte offset.
pub(crate) fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    (line, column)
}
