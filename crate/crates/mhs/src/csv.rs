//! Deterministic CSV emission and parsing.
//!
//! Floats are serialized with 17 significant digits (`{:.16e}`), which
//! round-trips every finite `f64` exactly; identical runs therefore produce
//! byte-identical files. Missing values are empty cells.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected {expected} columns, found {found}")]
    Shape {
        path: String,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{line}: bad number {value:?}")]
    Number {
        path: String,
        line: usize,
        value: String,
    },
}

/// One cell of a table.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(x) => Some(*x),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format_f64(*x),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

/// 17 significant digits; round-trip exact for every finite double.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header plus rows. The writer emits exactly `header.len()` cells per row.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width mismatch");
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for cell in row {
                if !first {
                    out.push(',');
                }
                let _ = write!(out, "{}", cell.render());
                first = false;
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CsvError> {
        std::fs::write(path, self.render()).map_err(|source| CsvError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Reads a table back; numeric-looking cells become [`Cell::Float`]
    /// (NaN and infinities included), empty cells stay [`Cell::Empty`].
    pub fn read(path: &Path) -> Result<Self, CsvError> {
        let text = std::fs::read_to_string(path).map_err(|source| CsvError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut lines = text.lines().enumerate();
        let header = match lines.next() {
            Some((_, h)) => h.split(',').map(|s| s.to_string()).collect::<Vec<_>>(),
            None => Vec::new(),
        };
        let mut rows = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let cells: Vec<Cell> = line
                .split(',')
                .map(|field| {
                    if field.is_empty() {
                        Cell::Empty
                    } else if let Ok(i) = field.parse::<i64>() {
                        Cell::Int(i)
                    } else if let Ok(x) = field.parse::<f64>() {
                        Cell::Float(x)
                    } else {
                        Cell::Text(field.to_string())
                    }
                })
                .collect();
            if cells.len() != header.len() {
                return Err(CsvError::Shape {
                    path: path.display().to_string(),
                    line: idx + 1,
                    expected: header.len(),
                    found: cells.len(),
                });
            }
            rows.push(cells);
        }
        Ok(Self { header, rows })
    }
}
