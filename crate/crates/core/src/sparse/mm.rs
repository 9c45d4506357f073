//! Matrix Market coordinate files and plain-text vectors.
//!
//! Matrices are written as `%%MatrixMarket matrix coordinate real general`
//! with 1-based indices. The reader also accepts `integer` fields and the
//! `symmetric` qualifier. Vector files hold one value per line; blank lines
//! and lines starting with `#` are skipped.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::csr::CsrMatrix;
use super::vector::DenseVector;
use crate::error::{Error, Result};

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_market(&text, path)
}

pub fn parse_matrix_market(text: &str, path: &Path) -> Result<CsrMatrix> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    let (hline, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(err(hline, format!("bad header `{header}`")));
    }
    if tokens[2] != "coordinate" {
        return Err(err(hline, format!("unsupported format `{}`", tokens[2])));
    }
    if !matches!(tokens[3].as_str(), "real" | "integer" | "double") {
        return Err(err(hline, format!("unsupported field `{}`", tokens[3])));
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(err(hline, format!("unsupported symmetry `{other}`"))),
    };

    let mut data = lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
    let (sline, size) = data
        .next()
        .ok_or_else(|| err(hline + 1, "missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| err(sline, format!("bad size line `{size}`: {e}")))?;
    let [n_rows, n_cols, nnz] = dims[..] else {
        return Err(err(
            sline,
            format!("size line needs 3 integers, got `{size}`"),
        ));
    };

    let mut triplets = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
    let mut count = 0;
    for (lno, line) in data {
        let mut it = line.split_whitespace();
        let (Some(r), Some(c), Some(v), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(err(lno, format!("expected `row col value`, got `{line}`")));
        };
        let r: usize = r
            .parse()
            .map_err(|e| err(lno, format!("bad row index `{r}`: {e}")))?;
        let c: usize = c
            .parse()
            .map_err(|e| err(lno, format!("bad column index `{c}`: {e}")))?;
        let v: f64 = v
            .parse()
            .map_err(|e| err(lno, format!("bad value `{v}`: {e}")))?;
        if r == 0 || c == 0 || r > n_rows || c > n_cols {
            return Err(err(
                lno,
                format!("index ({r}, {c}) outside {n_rows}x{n_cols}"),
            ));
        }
        if !v.is_finite() {
            return Err(err(lno, format!("non-finite value `{v}`")));
        }
        triplets.push((r - 1, c - 1, v));
        if symmetric && r != c {
            triplets.push((c - 1, r - 1, v));
        }
        count += 1;
        if count > nnz {
            return Err(err(lno, format!("more than the declared {nnz} entries")));
        }
    }
    if count != nnz {
        return Err(err(
            text.lines().count().max(1),
            format!("declared {nnz} entries, found {count}"),
        ));
    }
    CsrMatrix::from_triplets(n_rows, n_cols, triplets)
}

pub fn format_matrix_market(m: &CsrMatrix) -> String {
    let mut out = String::with_capacity(32 * (m.nnz() + 2));
    out.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(out, "{} {} {}", m.n_rows(), m.n_cols(), m.nnz());
    for (i, j, v) in m.triplets() {
        let _ = writeln!(out, "{} {} {:.16e}", i + 1, j + 1, v);
    }
    out
}

pub fn write_matrix_market(path: impl AsRef<Path>, m: &CsrMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_matrix_market(m)).map_err(|e| Error::io(path, e))
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<DenseVector> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vector(&text, path)
}

pub fn parse_vector(text: &str, path: &Path) -> Result<DenseVector> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line.parse().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("bad value `{line}`: {e}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("non-finite value `{line}`"),
            });
        }
        out.push(v);
    }
    Ok(out.into())
}

pub fn write_vector(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(24 * v.len());
    for x in v {
        let _ = writeln!(out, "{x:.16e}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
