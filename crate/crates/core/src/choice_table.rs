//! Choice tables: the static/dynamic prior, the augmented table built from
//! learned RPMs, update triggers and Shannon-index diagnostics.

use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::bigram::Rpm;
use crate::matrix::SquareMatrix;
use crate::matrix_file::{self, MatrixFileError, MatrixKind};
use crate::trace::{SyscallId, Vocabulary};

#[derive(Debug, Error)]
pub enum ChoiceTableError {
    #[error("static row {0} has no positive weight")]
    EmptyStaticRow(usize),
    #[error("matrix dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("negative or non-finite weight at ({0}, {1})")]
    InvalidWeight(usize, usize),
    #[error(transparent)]
    File(#[from] MatrixFileError),
    #[error("vocabulary of {0} does not match the static table")]
    VocabularyMismatch(String),
}

fn check_weights(m: &SquareMatrix) -> Result<(), ChoiceTableError> {
    for (i, row) in m.rows().enumerate() {
        if let Some(j) = row.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(ChoiceTableError::InvalidWeight(i, j));
        }
    }
    Ok(())
}

/// Static (interface-derived) and dynamic (feedback-derived) weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceTable {
    static_weights: SquareMatrix,
    dynamic_weights: SquareMatrix,
}

impl ChoiceTable {
    /// Every static row must carry at least one positive weight.
    pub fn new(
        static_weights: SquareMatrix,
        dynamic_weights: SquareMatrix,
    ) -> Result<Self, ChoiceTableError> {
        if static_weights.size() != dynamic_weights.size() {
            return Err(ChoiceTableError::DimensionMismatch(
                static_weights.size(),
                dynamic_weights.size(),
            ));
        }
        check_weights(&static_weights)?;
        check_weights(&dynamic_weights)?;
        for i in 0..static_weights.size() {
            if static_weights.row_support(i) == 0 {
                return Err(ChoiceTableError::EmptyStaticRow(i));
            }
        }
        Ok(Self {
            static_weights,
            dynamic_weights,
        })
    }

    pub fn from_static(static_weights: SquareMatrix) -> Result<Self, ChoiceTableError> {
        let m = static_weights.size();
        Self::new(static_weights, SquareMatrix::zeros(m))
    }

    pub fn size(&self) -> usize {
        self.static_weights.size()
    }

    pub fn static_weights(&self) -> &SquareMatrix {
        &self.static_weights
    }

    pub fn dynamic_weights(&self) -> &SquareMatrix {
        &self.dynamic_weights
    }

    /// Adds `amount` of feedback weight to the pair `from → to`.
    pub fn record_dynamic(&mut self, from: SyscallId, to: SyscallId, amount: f64) {
        assert!(amount >= 0.0 && amount.is_finite());
        self.dynamic_weights.add(from.index(), to.index(), amount);
    }

    /// Loads a static table and an optional dynamic table from matrix files.
    pub fn load(
        static_path: &Path,
        dynamic_path: Option<&Path>,
    ) -> Result<(Self, Vocabulary), ChoiceTableError> {
        let (static_weights, vocab) = load_kind(static_path, MatrixKind::CtStatic)?;
        let dynamic_weights = match dynamic_path {
            Some(p) => {
                let (m, v) = load_kind(p, MatrixKind::CtDynamic)?;
                if v != vocab {
                    return Err(ChoiceTableError::VocabularyMismatch(p.display().to_string()));
                }
                m
            }
            None => SquareMatrix::zeros(vocab.len()),
        };
        Ok((Self::new(static_weights, dynamic_weights)?, vocab))
    }

    pub fn save(&self, vocab: &Vocabulary, static_path: &Path, dynamic_path: Option<&Path>) -> Result<(), MatrixFileError> {
        matrix_file::save_matrix(static_path, MatrixKind::CtStatic, vocab, &self.static_weights)?;
        if let Some(p) = dynamic_path {
            matrix_file::save_matrix(p, MatrixKind::CtDynamic, vocab, &self.dynamic_weights)?;
        }
        Ok(())
    }
}

fn load_kind(path: &Path, expected: MatrixKind) -> Result<(SquareMatrix, Vocabulary), ChoiceTableError> {
    let (kind, vocab, m) = matrix_file::load_matrix(path)?;
    if kind != expected {
        return Err(MatrixFileError::WrongKind {
            path: path.to_path_buf(),
            expected,
            found: kind,
        }
        .into());
    }
    Ok((m, vocab))
}

/// Sampling weights actually used for generation.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedChoiceTable {
    weights: SquareMatrix,
    generation: u64,
}

impl AugmentedChoiceTable {
    /// Wraps raw weights (e.g. loaded from a file). Rows must be non-empty.
    pub fn from_weights(weights: SquareMatrix, generation: u64) -> Result<Self, ChoiceTableError> {
        check_weights(&weights)?;
        for i in 0..weights.size() {
            if weights.row_support(i) == 0 {
                return Err(ChoiceTableError::EmptyStaticRow(i));
            }
        }
        Ok(Self { weights, generation })
    }

    pub fn weights(&self) -> &SquareMatrix {
        &self.weights
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn size(&self) -> usize {
        self.weights.size()
    }

    pub fn weight(&self, from: SyscallId, to: SyscallId) -> f64 {
        self.weights.at(from, to)
    }

    pub fn save(&self, vocab: &Vocabulary, path: &Path) -> Result<(), MatrixFileError> {
        matrix_file::save_matrix(path, MatrixKind::Act, vocab, &self.weights)
    }

    /// Loads an augmented table; a static choice-table file is accepted too.
    pub fn load(path: &Path) -> Result<(Self, Vocabulary), ChoiceTableError> {
        let (kind, vocab, m) = matrix_file::load_matrix(path)?;
        if !matches!(kind, MatrixKind::Act | MatrixKind::CtStatic) {
            return Err(MatrixFileError::WrongKind {
                path: path.to_path_buf(),
                expected: MatrixKind::Act,
                found: kind,
            }
            .into());
        }
        Ok((Self::from_weights(m, 0)?, vocab))
    }
}

/// `2·sqrt(p)` applied entrywise, the scaling learned RPMs undergo before
/// they are added to the table.
pub fn transform_rpm(rpm: &Rpm) -> SquareMatrix {
    rpm.matrix().map(transform_entry)
}

#[inline]
pub fn transform_entry(p: f64) -> f64 {
    2.0 * p.sqrt()
}

/// The augmented table starts as a copy of the static weights; dynamic
/// weights and learned models only enter at the first update.
pub fn init_act(ct: &ChoiceTable) -> AugmentedChoiceTable {
    AugmentedChoiceTable {
        weights: ct.static_weights.clone(),
        generation: 0,
    }
}

/// How many new sequences must accumulate before the table is rebuilt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UpdatePolicy {
    pub small_corpus_threshold: usize,
    pub small_batch: usize,
    pub large_batch: usize,
}

impl Default for UpdatePolicy {
    fn default() -> Self {
        Self {
            small_corpus_threshold: 100,
            small_batch: 33,
            large_batch: 333,
        }
    }
}

pub fn should_update(corpus_size: usize, new_sequences: usize, policy: &UpdatePolicy) -> bool {
    if corpus_size < policy.small_corpus_threshold {
        new_sequences >= policy.small_batch
    } else {
        new_sequences >= policy.large_batch
    }
}

/// Rebuilds the table as `static + dynamic + dtn + corpus_n`, where `dtn`
/// and `corpus_n` are already transformed.
pub fn update_act(
    act: &AugmentedChoiceTable,
    ct: &ChoiceTable,
    dtn: &SquareMatrix,
    corpus_n: &SquareMatrix,
) -> Result<AugmentedChoiceTable, ChoiceTableError> {
    let m = ct.size();
    for other in [act.size(), dtn.size(), corpus_n.size()] {
        if other != m {
            return Err(ChoiceTableError::DimensionMismatch(m, other));
        }
    }
    let mut weights = SquareMatrix::zeros(m);
    for i in 0..m {
        for j in 0..m {
            let w = ct.static_weights.get(i, j)
                + ct.dynamic_weights.get(i, j)
                + dtn.get(i, j)
                + corpus_n.get(i, j);
            weights.set(i, j, w);
        }
    }
    check_weights(&weights)?;
    Ok(AugmentedChoiceTable {
        weights,
        generation: act.generation + 1,
    })
}

/// Normalizes a weight row into a probability vector. Zero rows stay zero.
pub fn normalize(row: &[f64]) -> Vec<f64> {
    let sum: f64 = row.iter().sum();
    if sum > 0.0 {
        row.iter().map(|w| w / sum).collect()
    } else {
        vec![0.0; row.len()]
    }
}

pub fn row_distribution(act: &AugmentedChoiceTable, i: SyscallId) -> Vec<f64> {
    normalize(act.weights.row(i.index()))
}

/// Shannon entropy in bits with `0·log2(0) = 0`.
pub fn entropy_bits(probs: &[f64]) -> f64 {
    let h: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum();
    // -0.0 and tiny negative rounding for deterministic rows
    h.max(0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntropyReport {
    pub per_row_si: Vec<f64>,
    pub mean_si: f64,
    pub generation: u64,
}

impl EntropyReport {
    fn from_rows<'a>(rows: impl Iterator<Item = &'a [f64]>, generation: u64) -> Self {
        let per_row_si: Vec<f64> = rows.map(|r| entropy_bits(&normalize(r))).collect();
        let mean_si = if per_row_si.is_empty() {
            0.0
        } else {
            per_row_si.iter().sum::<f64>() / per_row_si.len() as f64
        };
        Self {
            per_row_si,
            mean_si,
            generation,
        }
    }

    pub fn write_csv_header<W: Write>(out: &mut W) -> io::Result<()> {
        writeln!(out, "generation,row_index,si_bits")
    }

    /// One line per row followed by a `mean_si` summary line.
    pub fn write_csv_rows<W: Write>(&self, out: &mut W) -> io::Result<()> {
        for (i, si) in self.per_row_si.iter().enumerate() {
            writeln!(out, "{},{},{}", self.generation, i, fmt_f64(*si))?;
        }
        writeln!(out, "{},mean_si,{}", self.generation, fmt_f64(self.mean_si))
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        Self::write_csv_header(&mut buf).expect("vec write");
        self.write_csv_rows(&mut buf).expect("vec write");
        String::from_utf8(buf).expect("ascii csv")
    }
}

/// Locale-independent fixed formatting used by every CSV writer.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.6}")
}

/// Per-row Shannon index of the table's normalized rows.
pub fn shannon_index(act: &AugmentedChoiceTable) -> EntropyReport {
    EntropyReport::from_rows(act.weights.rows(), act.generation)
}

/// Shannon index of an arbitrary weight or probability matrix.
pub fn matrix_entropy(m: &SquareMatrix) -> EntropyReport {
    EntropyReport::from_rows(m.rows(), 0)
}
