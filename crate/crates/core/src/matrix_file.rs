//! JSON matrix files shared by RPMs and choice tables.
//!
//! ```text
//! {"version": 1, "kind": "rpm", "vocabulary": ["open", "read"],
//!  "rows": [{"i": 0, "entries": [[1, 1.0000000000000000e0]]}]}
//! ```
//!
//! Only nonzero entries are stored. Values are written with 17 significant
//! digits so every `f64` survives a round trip bit for bit.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::matrix::SquareMatrix;
use crate::trace::Vocabulary;

pub const FORMAT_VERSION: u32 = 1;

/// Tolerance applied to RPM row sums when loading.
pub const LOAD_ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Rpm,
    CtStatic,
    CtDynamic,
    Act,
}

#[derive(Debug, Error)]
pub enum MatrixFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: unsupported or malformed matrix file: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: row {row} sums to {sum}, expected 1 or 0")]
    RowSum { path: PathBuf, row: usize, sum: f64 },
    #[error("{path}: row {row} entry {col} is invalid ({value})")]
    InvalidEntry {
        path: PathBuf,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("{path}: expected a {expected:?} matrix, found {found:?}")]
    WrongKind {
        path: PathBuf,
        expected: MatrixKind,
        found: MatrixKind,
    },
}

#[derive(Serialize)]
struct RowOut {
    i: usize,
    entries: Vec<(usize, Box<RawValue>)>,
}

#[derive(Serialize)]
struct FileOut<'a> {
    version: u32,
    kind: MatrixKind,
    vocabulary: &'a [String],
    rows: Vec<RowOut>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RowIn {
    i: usize,
    entries: Vec<(usize, f64)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileIn {
    version: u32,
    #[serde(default)]
    kind: Option<MatrixKind>,
    vocabulary: Vec<String>,
    rows: Vec<RowIn>,
}

/// Formats `v` with 17 significant digits as a JSON number.
pub(crate) fn exact_number(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes a matrix to its JSON text.
pub fn to_json(kind: MatrixKind, vocab: &Vocabulary, matrix: &SquareMatrix) -> String {
    assert_eq!(vocab.len(), matrix.size(), "vocabulary/matrix size mismatch");
    let rows = matrix
        .rows()
        .enumerate()
        .filter_map(|(i, row)| {
            let entries: Vec<_> = row
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(j, &v)| {
                    let raw = RawValue::from_string(exact_number(v))
                        .expect("formatted float is a JSON number");
                    (j, raw)
                })
                .collect();
            (!entries.is_empty()).then_some(RowOut { i, entries })
        })
        .collect();
    let file = FileOut {
        version: FORMAT_VERSION,
        kind,
        vocabulary: vocab.names(),
        rows,
    };
    serde_json::to_string(&file).expect("matrix file serializes")
}

pub fn save_matrix(
    path: &Path,
    kind: MatrixKind,
    vocab: &Vocabulary,
    matrix: &SquareMatrix,
) -> Result<(), MatrixFileError> {
    let mut text = to_json(kind, vocab, matrix);
    text.push('\n');
    write_atomic(path, text.as_bytes()).map_err(|source| MatrixFileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses matrix JSON text. Entries must be finite and non-negative; RPM
/// rows must additionally sum to 1 (or 0) within
/// [`LOAD_ROW_SUM_TOLERANCE`].
pub fn from_json(
    path: &Path,
    text: &str,
) -> Result<(MatrixKind, Vocabulary, SquareMatrix), MatrixFileError> {
    let format_err = |message: String| MatrixFileError::Format {
        path: path.to_path_buf(),
        message,
    };
    let file: FileIn = serde_json::from_str(text).map_err(|e| format_err(e.to_string()))?;
    if file.version != FORMAT_VERSION {
        return Err(format_err(format!("version {}", file.version)));
    }
    let kind = file.kind.unwrap_or(MatrixKind::Rpm);
    let vocab = Vocabulary::from_names(&file.vocabulary);
    if vocab.len() != file.vocabulary.len() {
        return Err(format_err("duplicate vocabulary entry".into()));
    }
    let m = vocab.len();
    let mut matrix = SquareMatrix::zeros(m);
    let mut seen = vec![false; m];
    for row in &file.rows {
        if row.i >= m {
            return Err(format_err(format!("row index {} out of range", row.i)));
        }
        if std::mem::replace(&mut seen[row.i], true) {
            return Err(format_err(format!("row {} listed twice", row.i)));
        }
        for &(j, v) in &row.entries {
            if j >= m {
                return Err(format_err(format!("column {j} out of range in row {}", row.i)));
            }
            let bad = !v.is_finite() || v < 0.0 || (kind == MatrixKind::Rpm && v > 1.0);
            if bad {
                return Err(MatrixFileError::InvalidEntry {
                    path: path.to_path_buf(),
                    row: row.i,
                    col: j,
                    value: v,
                });
            }
            matrix.set(row.i, j, v);
        }
    }
    if kind == MatrixKind::Rpm {
        for i in 0..m {
            let sum = matrix.row_sum(i);
            if sum != 0.0 && (sum - 1.0).abs() > LOAD_ROW_SUM_TOLERANCE {
                return Err(MatrixFileError::RowSum {
                    path: path.to_path_buf(),
                    row: i,
                    sum,
                });
            }
        }
    }
    Ok((kind, vocab, matrix))
}

pub fn load_matrix(path: &Path) -> Result<(MatrixKind, Vocabulary, SquareMatrix), MatrixFileError> {
    let text = fs::read_to_string(path).map_err(|source| MatrixFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_json(path, &text)
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = dir.join(tmp_name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}
