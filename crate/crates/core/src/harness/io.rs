//! Text matrix files.
//!
//! Line 1 holds the row count, followed by one line per row with
//! whitespace-separated `(re, im)` pairs. Lines starting with `#` are
//! comments; `key=value` tokens in comments carry metadata. Square files
//! have `2N` floats per row. Rectangular files (s-matrices) take their
//! column count from the first row, or from a `cols=` header when empty.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::spaces::{ModelSpace, ObservableMatrix};
use crate::transform::{DecouplingMap, Provenance};

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixFile {
    /// Comment lines with the leading `#` and surrounding spaces removed.
    pub comments: Vec<String>,
    pub matrix: CMatrix,
}

impl MatrixFile {
    /// `key=value` tokens across all comment lines; later keys win.
    pub fn metadata(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        for line in &self.comments {
            for tok in line.split_whitespace() {
                if let Some((k, v)) = tok.split_once('=') {
                    out.insert(k.to_string(), v.to_string());
                }
            }
        }
        out
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(line, format!("invalid float {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value {tok:?}")));
    }
    Ok(v)
}

/// Parses a matrix file. With `square` set, rows must carry `2N` floats.
pub fn parse_matrix(text: &str, square: bool) -> Result<MatrixFile> {
    let mut comments = Vec::new();
    let mut data: Vec<(usize, &str)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(c) = line.strip_prefix('#') {
            comments.push(c.trim().to_string());
        } else if !line.is_empty() {
            data.push((i + 1, line));
        }
    }
    let (first_line, first) = *data.first().ok_or_else(|| parse_err(0, "missing dimension line"))?;
    let rows: usize = first
        .parse()
        .map_err(|_| parse_err(first_line, format!("expected a row count, got {first:?}")))?;
    let body = &data[1..];
    if body.len() != rows {
        let line = body.last().map_or(first_line, |(l, _)| *l);
        return Err(parse_err(line, format!("expected {rows} rows, found {}", body.len())));
    }

    let mut cols = if square { Some(rows) } else { None };
    if rows == 0 && cols.is_none() {
        let meta = MatrixFile {
            comments: comments.clone(),
            matrix: CMatrix::zeros(0, 0),
        }
        .metadata();
        cols = Some(match meta.get("cols") {
            Some(c) => c
                .parse()
                .map_err(|_| parse_err(first_line, format!("invalid cols={c:?}")))?,
            None => 0,
        });
    }

    let mut entries: Vec<Complex64> = Vec::new();
    for &(line, row) in body {
        let toks: Vec<&str> = row.split_whitespace().collect();
        if !toks.len().is_multiple_of(2) {
            return Err(parse_err(line, "odd number of floats; entries are (re, im) pairs"));
        }
        let width = toks.len() / 2;
        match cols {
            Some(c) if c != width => {
                return Err(parse_err(line, format!("expected {} floats, found {}", 2 * c, toks.len())))
            }
            None => cols = Some(width),
            _ => {}
        }
        for pair in toks.chunks(2) {
            entries.push(Complex64::new(parse_f64(pair[0], line)?, parse_f64(pair[1], line)?));
        }
    }
    let cols = cols.unwrap_or(0);
    Ok(MatrixFile {
        comments,
        matrix: CMatrix::from_row_slice(rows, cols, &entries),
    })
}

/// Serializes `m` with the given comment lines. Floats use the shortest
/// representation that round-trips exactly.
pub fn format_matrix(m: &CMatrix, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    let _ = writeln!(out, "{}", m.nrows());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{:?} {:?}", m[(i, j)].re, m[(i, j)].im))
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn read_matrix_file(path: &Path, square: bool) -> Result<MatrixFile> {
    parse_matrix(&fs::read_to_string(path)?, square)
}

pub fn read_observable(path: &Path) -> Result<ObservableMatrix> {
    ObservableMatrix::new(read_matrix_file(path, true)?.matrix)
}

pub fn write_matrix(path: &Path, m: &CMatrix, comments: &[String]) -> Result<()> {
    fs::write(path, format_matrix(m, comments))?;
    Ok(())
}

pub fn format_labels(labels: &[usize]) -> String {
    labels.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Parses `1,2,3` into 1-based labels. Range and duplicate checks happen
/// where the dimension is known.
pub fn parse_labels(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::EmptyIndexSet);
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("invalid index {t:?} in {s:?}")))
        })
        .collect()
}

fn provenance_line(p: &Provenance) -> String {
    match p {
        Provenance::Direct { selection } => format!("provenance=direct J={}", format_labels(selection)),
        Provenance::Iterative { iterations, residual } => {
            format!("provenance=iterative iterations={iterations} residual={residual:e}")
        }
        Provenance::Supplied => "provenance=supplied".to_string(),
    }
}

pub fn format_decoupling_map(dm: &DecouplingMap) -> String {
    let s = dm.s();
    let header = vec![
        format!(
            "s-matrix rows={} cols={} K={}",
            s.nrows(),
            s.ncols(),
            format_labels(&dm.model_space().labels())
        ),
        provenance_line(dm.provenance()),
    ];
    format_matrix(s, &header)
}

pub fn write_decoupling_map(path: &Path, dm: &DecouplingMap) -> Result<()> {
    fs::write(path, format_decoupling_map(dm))?;
    Ok(())
}

/// Reads an s-matrix. `K` comes from the header unless `model_space` is
/// given, in which case the two must agree.
pub fn parse_decoupling_map(text: &str, model_space: Option<&ModelSpace>) -> Result<DecouplingMap> {
    let file = parse_matrix(text, false)?;
    let meta = file.metadata();
    let (rows, cols) = file.matrix.shape();
    let ms = match (meta.get("K"), model_space) {
        (Some(k), Some(ms)) => {
            let header = ModelSpace::new(rows + cols, &parse_labels(k)?)?;
            if &header != ms {
                return Err(Error::DimensionMismatch(format!(
                    "s-matrix header has K={k}, requested K={}",
                    format_labels(&ms.labels())
                )));
            }
            header
        }
        (Some(k), None) => ModelSpace::new(rows + cols, &parse_labels(k)?)?,
        (None, Some(ms)) => ms.clone(),
        (None, None) => {
            return Err(Error::Parse {
                line: 0,
                message: "s-matrix has no K= header and no model space was given".into(),
            })
        }
    };
    DecouplingMap::with_provenance(ms, file.matrix, Provenance::Supplied)
}

pub fn read_decoupling_map(path: &Path, model_space: Option<&ModelSpace>) -> Result<DecouplingMap> {
    parse_decoupling_map(&fs::read_to_string(path)?, model_space)
}

/// Header for an effective-operator file.
pub fn effective_header(kind: &str, k: &[usize], j: Option<&[usize]>, residual: f64) -> Vec<String> {
    let j = j.map_or_else(|| "-".to_string(), format_labels);
    vec![format!(
        "effective {kind} K={} J={j} residual={residual:e}",
        format_labels(k)
    )]
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanBlock {
    pub j: Vec<usize>,
    pub k: Vec<usize>,
}

/// Parses lines of the form `block: J=1,2,3 K=4,5,6`.
pub fn parse_plan(text: &str) -> Result<Vec<PlanBlock>> {
    let mut blocks = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rest = line
            .strip_prefix("block:")
            .ok_or_else(|| parse_err(i + 1, "expected `block: J=... K=...`"))?;
        let mut j = None;
        let mut k = None;
        for tok in rest.split_whitespace() {
            match tok.split_once('=') {
                Some(("J", v)) => j = Some(parse_labels(v)?),
                Some(("K", v)) => k = Some(parse_labels(v)?),
                _ => return Err(parse_err(i + 1, format!("unexpected token {tok:?}"))),
            }
        }
        match (j, k) {
            (Some(j), Some(k)) => blocks.push(PlanBlock { j, k }),
            _ => return Err(parse_err(i + 1, "block needs both J= and K=")),
        }
    }
    if blocks.is_empty() {
        return Err(Error::PartitionInvalid("plan has no blocks".into()));
    }
    Ok(blocks)
}
