//! ESRI-style ASCII grid reading and writing.
//!
//! A document is six `key value` header lines followed by `nrows` lines of
//! `ncols` whitespace-separated numbers, top row first:
//!
//! ```text
//! ncols 2
//! nrows 1
//! xllcorner 0
//! yllcorner 0
//! cellsize 10
//! NODATA_value -9999
//! 0.1 0.2
//! ```
//!
//! Header keys are matched case-insensitively. Serialization writes the
//! shortest decimal that reads back to the same `f64`, so a parse/serialize
//! round trip is bit-exact.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use super::{GridHeader, RasterError, RasterGrid};

const HEADER_KEYS: [&str; 6] = [
    "ncols",
    "nrows",
    "xllcorner",
    "yllcorner",
    "cellsize",
    "nodata_value",
];

/// Broad category of a parse failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorClass {
    Header,
    Shape,
    Cell,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    UnknownKey(String),
    DuplicateKey(String),
    MissingKey(&'static str),
    BadHeaderValue { key: String, value: String },
    MalformedHeaderLine,
    InvalidGeometry(String),
    ColumnCount { expected: usize, found: usize },
    RowCount { expected: usize, found: usize },
    NonNumeric(String),
}

/// Parse failure with its location. `line` is the 1-based line in the
/// document; `row`/`col` are 1-based data coordinates when the failure is
/// inside the value block.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub row: Option<usize>,
    pub col: Option<usize>,
    pub kind: ParseErrorKind,
}

impl ParseError {
    pub fn class(&self) -> ParseErrorClass {
        use ParseErrorKind::*;
        match self.kind {
            UnknownKey(_) | DuplicateKey(_) | MissingKey(_) | BadHeaderValue { .. }
            | MalformedHeaderLine | InvalidGeometry(_) => ParseErrorClass::Header,
            ColumnCount { .. } | RowCount { .. } => ParseErrorClass::Shape,
            NonNumeric(_) => ParseErrorClass::Cell,
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}", self.line)?;
        match (self.row, self.col) {
            (Some(r), Some(c)) => write!(f, " (row {r}, col {c})")?,
            (Some(r), None) => write!(f, " (row {r})")?,
            _ => {}
        }
        f.write_str(": ")?;
        match &self.kind {
            ParseErrorKind::UnknownKey(k) => write!(f, "unknown header key '{k}'"),
            ParseErrorKind::DuplicateKey(k) => write!(f, "duplicate header key '{k}'"),
            ParseErrorKind::MissingKey(k) => write!(f, "missing header key '{k}'"),
            ParseErrorKind::BadHeaderValue { key, value } => {
                write!(f, "invalid value '{value}' for header key '{key}'")
            }
            ParseErrorKind::MalformedHeaderLine => f.write_str("expected 'key value' header line"),
            ParseErrorKind::InvalidGeometry(msg) => write!(f, "invalid grid geometry: {msg}"),
            ParseErrorKind::ColumnCount { expected, found } => {
                write!(f, "expected {expected} columns, found {found}")
            }
            ParseErrorKind::RowCount { expected, found } => {
                write!(f, "expected {expected} rows, found {found}")
            }
            ParseErrorKind::NonNumeric(tok) => write!(f, "non-numeric cell '{tok}'"),
        }
    }
}

impl std::error::Error for ParseError {}

fn header_error(line: usize, kind: ParseErrorKind) -> ParseError {
    ParseError {
        line,
        row: None,
        col: None,
        kind,
    }
}

pub fn parse_grid(text: &str) -> Result<RasterGrid, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let mut fields: [Option<f64>; 6] = [None; 6];
    let mut last_line = 0;
    for _ in 0..HEADER_KEYS.len() {
        let Some((lineno, line)) = lines.next() else {
            let missing = HEADER_KEYS
                .iter()
                .zip(fields.iter())
                .find(|(_, v)| v.is_none())
                .map(|(k, _)| *k)
                .unwrap_or("ncols");
            return Err(header_error(last_line + 1, ParseErrorKind::MissingKey(missing)));
        };
        last_line = lineno;
        let mut tokens = line.split_whitespace();
        let (Some(key), Some(value), None) = (tokens.next(), tokens.next(), tokens.next()) else {
            return Err(header_error(lineno, ParseErrorKind::MalformedHeaderLine));
        };
        let lower = key.to_ascii_lowercase();
        let Some(slot) = HEADER_KEYS.iter().position(|k| *k == lower) else {
            return Err(header_error(lineno, ParseErrorKind::UnknownKey(key.to_string())));
        };
        if fields[slot].is_some() {
            return Err(header_error(lineno, ParseErrorKind::DuplicateKey(key.to_string())));
        }
        let bad = || {
            header_error(
                lineno,
                ParseErrorKind::BadHeaderValue {
                    key: key.to_string(),
                    value: value.to_string(),
                },
            )
        };
        let parsed = if slot < 2 {
            value.parse::<usize>().map_err(|_| bad())? as f64
        } else {
            let v = value.parse::<f64>().map_err(|_| bad())?;
            if !v.is_finite() {
                return Err(bad());
            }
            v
        };
        fields[slot] = Some(parsed);
    }

    let header = GridHeader {
        ncols: fields[0].unwrap() as usize,
        nrows: fields[1].unwrap() as usize,
        x_origin: fields[2].unwrap(),
        y_origin: fields[3].unwrap(),
        cell_size: fields[4].unwrap(),
        nodata: fields[5].unwrap(),
    };
    if let Err(e) = header.validate() {
        return Err(header_error(last_line, ParseErrorKind::InvalidGeometry(e.to_string())));
    }

    let mut values = Vec::with_capacity(header.cell_count());
    let mut row = 0usize;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        row += 1;
        if row > header.nrows {
            return Err(ParseError {
                line: lineno,
                row: Some(row),
                col: None,
                kind: ParseErrorKind::RowCount {
                    expected: header.nrows,
                    found: row,
                },
            });
        }
        let mut found = 0usize;
        for (c, tok) in line.split_whitespace().enumerate() {
            found += 1;
            if found > header.ncols {
                continue;
            }
            match tok.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(ParseError {
                        line: lineno,
                        row: Some(row),
                        col: Some(c + 1),
                        kind: ParseErrorKind::NonNumeric(tok.to_string()),
                    })
                }
            }
        }
        if found != header.ncols {
            return Err(ParseError {
                line: lineno,
                row: Some(row),
                col: None,
                kind: ParseErrorKind::ColumnCount {
                    expected: header.ncols,
                    found,
                },
            });
        }
        last_line = lineno;
    }
    if row != header.nrows {
        return Err(ParseError {
            line: last_line + 1,
            row: None,
            col: None,
            kind: ParseErrorKind::RowCount {
                expected: header.nrows,
                found: row,
            },
        });
    }

    Ok(RasterGrid::new(header, values).expect("header and value count already checked"))
}

/// Canonical text form of a grid.
pub fn serialize_grid(grid: &RasterGrid) -> String {
    let h = grid.header();
    let mut out = String::with_capacity(64 + grid.raw_values().len() * 8);
    // writing to a String cannot fail
    let _ = writeln!(out, "ncols {}", h.ncols);
    let _ = writeln!(out, "nrows {}", h.nrows);
    let _ = writeln!(out, "xllcorner {}", h.x_origin);
    let _ = writeln!(out, "yllcorner {}", h.y_origin);
    let _ = writeln!(out, "cellsize {}", h.cell_size);
    let _ = writeln!(out, "NODATA_value {}", h.nodata);
    for row in grid.raw_values().chunks(h.ncols) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<RasterGrid, RasterError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_grid(&text).map_err(|source| RasterError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_grid(path: impl AsRef<Path>, grid: &RasterGrid) -> Result<(), RasterError> {
    let path = path.as_ref();
    fs::write(path, serialize_grid(grid)).map_err(|source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    })
}
