//! Bigram learning of syscall dependency relations.
//!
//! Adjacent-pair counts are turned into a row-stochastic Relation
//! Probability Matrix (RPM) where entry `(i, j)` estimates the probability
//! that syscall `j` is invoked immediately after syscall `i`:
//!
//! ```text
//! p(j | i) = count(i j) / count(i)
//! ```
//!
//! `count(i)` is the number of adjacent pairs whose predecessor is `i`.
//! Rows with no outgoing pairs stay all zero; no smoothing is applied.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::SquareMatrix;
use crate::matrix_file::{self, MatrixFileError, MatrixKind};
use crate::trace::{Corpus, Label, SyscallId, Trace, Vocabulary};

/// Row-sum tolerance of the in-memory RPM invariant.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("unknown base syscall {0:?}")]
    UnknownBase(String),
    #[error("matrix dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("empty sequence")]
    EmptySequence,
    #[error("syscall id {0} out of range for {1} calls")]
    OutOfRange(usize, usize),
    #[error("row {row} sums to {sum}")]
    RowSum { row: usize, sum: f64 },
    #[error("weights must be positive and finite, got {0}:{1}")]
    InvalidWeights(f64, f64),
    #[error("invalid ratio {0:?}, expected A:B")]
    InvalidRatio(String),
    #[error("initial distribution of length {len} sums to {sum}")]
    InitialDistribution { len: usize, sum: f64 },
}

/// Adjacent-pair counts and per-predecessor totals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountMatrix {
    size: usize,
    pair_counts: Vec<u64>,
    row_totals: Vec<u64>,
}

impl CountMatrix {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            pair_counts: vec![0; size * size],
            row_totals: vec![0; size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pair(&self, i: usize, j: usize) -> u64 {
        self.pair_counts[i * self.size + j]
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.row_totals[i]
    }

    pub fn add_pair(&mut self, i: usize, j: usize, n: u64) {
        self.pair_counts[i * self.size + j] += n;
        self.row_totals[i] += n;
    }

    /// Counts every adjacent pair of `calls`.
    pub fn add_trace(&mut self, calls: &[SyscallId]) {
        for w in calls.windows(2) {
            self.add_pair(w[0].index(), w[1].index(), 1);
        }
    }

    pub fn total_pairs(&self) -> u64 {
        self.row_totals.iter().sum()
    }
}

/// Counts adjacent pairs over every trace of `corpus`.
pub fn learn_counts(corpus: &Corpus) -> CountMatrix {
    learn_counts_from(corpus.vocabulary.len(), &corpus.traces)
}

pub fn learn_counts_from<'a, I>(size: usize, traces: I) -> CountMatrix
where
    I: IntoIterator<Item = &'a Trace>,
{
    let mut counts = CountMatrix::zeros(size);
    for trace in traces {
        counts.add_trace(&trace.calls);
    }
    counts
}

/// Row-stochastic relation probability matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Rpm {
    probs: SquareMatrix,
}

impl Rpm {
    pub fn zeros(size: usize) -> Self {
        Self {
            probs: SquareMatrix::zeros(size),
        }
    }

    /// Wraps `probs`, checking that each row sums to 1 within
    /// [`ROW_SUM_TOLERANCE`] or is entirely zero.
    pub fn new(probs: SquareMatrix) -> Result<Self, LearnError> {
        Self::with_tolerance(probs, ROW_SUM_TOLERANCE)
    }

    pub(crate) fn with_tolerance(probs: SquareMatrix, tolerance: f64) -> Result<Self, LearnError> {
        for (row, values) in probs.rows().enumerate() {
            let sum: f64 = values.iter().sum();
            let valid_entries = values.iter().all(|v| (0.0..=1.0).contains(v));
            if !valid_entries || (sum != 0.0 && (sum - 1.0).abs() > tolerance) {
                return Err(LearnError::RowSum { row, sum });
            }
        }
        Ok(Self { probs })
    }

    pub fn size(&self) -> usize {
        self.probs.size()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.probs.row(i)
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.probs
    }

    pub fn is_zero(&self) -> bool {
        self.probs.as_slice().iter().all(|&v| v == 0.0)
    }

    /// Re-indexes this RPM from `from` onto `to` by variant name. Entries
    /// whose endpoints are missing from `to` are dropped and the surviving
    /// rows are renormalized.
    pub fn project(&self, from: &Vocabulary, to: &Vocabulary) -> Rpm {
        assert_eq!(from.len(), self.size(), "vocabulary/RPM size mismatch");
        let mapping: Vec<Option<usize>> = from
            .names()
            .iter()
            .map(|n| to.id(n).map(SyscallId::index))
            .collect();
        let mut raw = SquareMatrix::zeros(to.len());
        for (i, row) in self.probs.rows().enumerate() {
            let Some(ti) = mapping[i] else { continue };
            for (j, &p) in row.iter().enumerate() {
                if let (true, Some(tj)) = (p > 0.0, mapping[j]) {
                    raw.add(ti, tj, p);
                }
            }
        }
        normalize_rows(&mut raw);
        Rpm { probs: raw }
    }
}

/// Divides each nonzero row by its sum.
fn normalize_rows(m: &mut SquareMatrix) {
    for i in 0..m.size() {
        let sum = m.row_sum(i);
        if sum > 0.0 {
            for v in m.row_mut(i) {
                *v /= sum;
            }
        }
    }
}

/// `probs[i][j] = pair[i][j] / row_total[i]`, zero rows where the total is 0.
pub fn counts_to_rpm(counts: &CountMatrix) -> Rpm {
    let m = counts.size();
    let mut probs = SquareMatrix::zeros(m);
    for i in 0..m {
        let total = counts.row_total(i);
        if total != 0 {
            for j in 0..m {
                probs.set(i, j, counts.pair(i, j) as f64 / total as f64);
            }
        }
    }
    Rpm { probs }
}

/// Convenience: counts then normalizes.
pub fn learn_rpm(corpus: &Corpus) -> Rpm {
    counts_to_rpm(&learn_counts(corpus))
}

/// A pair count observed between two base names (no parameter variant).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasePairDelta {
    pub from: String,
    pub to: String,
    pub count: u64,
}

/// Tallies adjacent base-name pairs, in first-seen order.
pub fn base_pair_deltas<'a, I, S>(sequences: I) -> Vec<BasePairDelta>
where
    I: IntoIterator<Item = &'a [S]>,
    S: AsRef<str> + 'a,
{
    let mut index: std::collections::HashMap<(String, String), usize> = std::collections::HashMap::new();
    let mut deltas: Vec<BasePairDelta> = Vec::new();
    for seq in sequences {
        for w in seq.windows(2) {
            let key = (w[0].as_ref().to_owned(), w[1].as_ref().to_owned());
            match index.get(&key) {
                Some(&k) => deltas[k].count += 1,
                None => {
                    index.insert(key.clone(), deltas.len());
                    deltas.push(BasePairDelta {
                        from: key.0,
                        to: key.1,
                        count: 1,
                    });
                }
            }
        }
    }
    deltas
}

/// Over-approximation for name-only pair counts: each `(s, t, n)` adds `n`
/// to every variant pair `(s', t')` with base names `s` and `t`, and to the
/// row total of each such `s'` once per pair.
pub fn expand_abnormal_counts(
    deltas: &[BasePairDelta],
    vocab: &Vocabulary,
    counts: &CountMatrix,
) -> Result<CountMatrix, LearnError> {
    if vocab.len() != counts.size() {
        return Err(LearnError::DimensionMismatch(vocab.len(), counts.size()));
    }
    let mut out = counts.clone();
    for delta in deltas {
        let sources = vocab.variants_of(&delta.from);
        if sources.is_empty() {
            return Err(LearnError::UnknownBase(delta.from.clone()));
        }
        let targets = vocab.variants_of(&delta.to);
        if targets.is_empty() {
            return Err(LearnError::UnknownBase(delta.to.clone()));
        }
        if delta.count == 0 {
            continue;
        }
        for s in &sources {
            for t in &targets {
                out.add_pair(s.index(), t.index(), delta.count);
            }
        }
    }
    Ok(out)
}

/// Relative influence of the normal and abnormal RPMs. Serialized as
/// `"normal:abnormal"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CombineWeights {
    normal: f64,
    abnormal: f64,
}

impl CombineWeights {
    pub fn new(normal: f64, abnormal: f64) -> Result<Self, LearnError> {
        let ok = |w: f64| w.is_finite() && w > 0.0;
        if ok(normal) && ok(abnormal) {
            Ok(Self { normal, abnormal })
        } else {
            Err(LearnError::InvalidWeights(normal, abnormal))
        }
    }

    pub fn normal(&self) -> f64 {
        self.normal
    }

    pub fn abnormal(&self) -> f64 {
        self.abnormal
    }

    /// Parses `"A:B"` (normal:abnormal), e.g. `1:2`.
    pub fn parse(ratio: &str) -> Result<Self, LearnError> {
        let bad = || LearnError::InvalidRatio(ratio.to_owned());
        let (a, b) = ratio.split_once(':').ok_or_else(bad)?;
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        Self::new(a, b)
    }
}

impl Default for CombineWeights {
    fn default() -> Self {
        Self {
            normal: 1.0,
            abnormal: 1.0,
        }
    }
}

impl TryFrom<String> for CombineWeights {
    type Error = LearnError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::parse(&s)
    }
}

impl From<CombineWeights> for String {
    fn from(w: CombineWeights) -> String {
        w.to_string()
    }
}

impl std::fmt::Display for CombineWeights {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.normal, self.abnormal)
    }
}

/// Weighted sum of two RPMs followed by row normalization.
///
/// The weights are first reduced to fractions of their sum so that
/// scaling both by the same factor yields bit-identical output.
pub fn combine_rpms(normal: &Rpm, abnormal: &Rpm, w: CombineWeights) -> Result<Rpm, LearnError> {
    if normal.size() != abnormal.size() {
        return Err(LearnError::DimensionMismatch(normal.size(), abnormal.size()));
    }
    let total = w.normal + w.abnormal;
    let (wn, wa) = (w.normal / total, w.abnormal / total);
    let m = normal.size();
    let mut raw = SquareMatrix::zeros(m);
    for i in 0..m {
        for j in 0..m {
            raw.set(i, j, wn * normal.get(i, j) + wa * abnormal.get(i, j));
        }
    }
    normalize_rows(&mut raw);
    Ok(Rpm { probs: raw })
}

/// Empirical first-call frequencies of `corpus`; uniform when it has no
/// traces.
pub fn first_call_distribution(corpus: &Corpus) -> Vec<f64> {
    let m = corpus.vocabulary.len();
    let mut freq = vec![0.0; m];
    let mut n = 0usize;
    for trace in &corpus.traces {
        if let Some(first) = trace.calls.first() {
            freq[first.index()] += 1.0;
            n += 1;
        }
    }
    if n == 0 {
        return vec![1.0 / m as f64; m];
    }
    freq.iter_mut().for_each(|f| *f /= n as f64);
    freq
}

/// Bigram chain probability `p(w1) * prod p(w_k | w_{k-1})`.
pub fn sequence_probability(
    seq: &[SyscallId],
    rpm: &Rpm,
    initial: &[f64],
) -> Result<f64, LearnError> {
    let m = rpm.size();
    if initial.len() != m {
        return Err(LearnError::DimensionMismatch(initial.len(), m));
    }
    let sum: f64 = initial.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(LearnError::InitialDistribution { len: m, sum });
    }
    let (&first, _) = seq.split_first().ok_or(LearnError::EmptySequence)?;
    if let Some(bad) = seq.iter().find(|id| id.index() >= m) {
        return Err(LearnError::OutOfRange(bad.index(), m));
    }
    let mut p = initial[first.index()];
    for w in seq.windows(2) {
        if p == 0.0 {
            break;
        }
        p *= rpm.get(w[0].index(), w[1].index());
    }
    Ok(p)
}

pub fn save_rpm(rpm: &Rpm, vocab: &Vocabulary, path: &Path) -> Result<(), MatrixFileError> {
    matrix_file::save_matrix(path, MatrixKind::Rpm, vocab, rpm.matrix())
}

pub fn load_rpm(path: &Path) -> Result<(Rpm, Vocabulary), MatrixFileError> {
    let (kind, vocab, matrix) = matrix_file::load_matrix(path)?;
    if kind != MatrixKind::Rpm {
        return Err(MatrixFileError::WrongKind {
            path: path.to_path_buf(),
            expected: MatrixKind::Rpm,
            found: kind,
        });
    }
    // Row sums were validated against the file tolerance by the loader.
    Ok((Rpm { probs: matrix }, vocab))
}

/// Trains one RPM per label present in `corpus`.
pub fn learn_by_label(corpus: &Corpus) -> (Rpm, Rpm) {
    let m = corpus.vocabulary.len();
    let normal = learn_counts_from(m, corpus.traces.iter().filter(|t| t.label == Label::Normal));
    let abnormal = learn_counts_from(m, corpus.traces.iter().filter(|t| t.label == Label::Abnormal));
    (counts_to_rpm(&normal), counts_to_rpm(&abnormal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{parse_pipe_trace, Label};

    fn corpus(lines: &[&str]) -> Corpus {
        let mut c = Corpus::default();
        for l in lines {
            let t = parse_pipe_trace(l, &mut c.vocabulary, Label::Normal).unwrap();
            c.traces.push(t);
        }
        c
    }

    #[test]
    fn single_pair() {
        let c = corpus(&["a|b"]);
        let counts = learn_counts(&c);
        assert_eq!(counts.pair(0, 1), 1);
        assert_eq!(counts.row_total(0), 1);
        assert_eq!(counts.row_total(1), 0);
        let rpm = counts_to_rpm(&counts);
        assert_eq!(rpm.get(0, 1), 1.0);
    }

    #[test]
    fn worked_counts_and_rpm() {
        // a=0, b=1, c=2
        let c = corpus(&["a|b|a|c", "a|b"]);
        let counts = learn_counts(&c);
        assert_eq!(counts.pair(0, 1), 2);
        assert_eq!(counts.pair(1, 0), 1);
        assert_eq!(counts.pair(0, 2), 1);
        assert_eq!(
            (counts.row_total(0), counts.row_total(1), counts.row_total(2)),
            (3, 1, 0)
        );
        let rpm = counts_to_rpm(&counts);
        assert_eq!(rpm.row(0), &[0.0, 2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(rpm.row(1), &[1.0, 0.0, 0.0]);
        assert_eq!(rpm.row(2), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn length_one_trace_has_no_pairs() {
        let c = corpus(&["a"]);
        let counts = learn_counts(&c);
        assert_eq!(counts.total_pairs(), 0);
        assert!(counts_to_rpm(&counts).is_zero());
    }

    #[test]
    fn expansion_over_variants() {
        let vocab = Vocabulary::from_names(["open$A", "open$B", "read$X", "read$Y", "close"]);
        let counts = CountMatrix::zeros(vocab.len());
        let deltas = vec![BasePairDelta {
            from: "open".into(),
            to: "read".into(),
            count: 1,
        }];
        let out = expand_abnormal_counts(&deltas, &vocab, &counts).unwrap();
        for s in 0..2 {
            for t in 2..4 {
                assert_eq!(out.pair(s, t), 1);
            }
            assert_eq!(out.row_total(s), 2);
        }
        assert_eq!(out.total_pairs(), 4);
        assert_eq!(out.row_total(4), 0);
    }

    #[test]
    fn expansion_zero_and_unknown() {
        let vocab = Vocabulary::from_names(["open$A", "read"]);
        let counts = CountMatrix::zeros(2);
        let zero = vec![BasePairDelta {
            from: "open".into(),
            to: "read".into(),
            count: 0,
        }];
        assert_eq!(expand_abnormal_counts(&zero, &vocab, &counts).unwrap(), counts);
        let unknown = vec![BasePairDelta {
            from: "frobnicate".into(),
            to: "read".into(),
            count: 3,
        }];
        assert!(matches!(
            expand_abnormal_counts(&unknown, &vocab, &counts),
            Err(LearnError::UnknownBase(b)) if b == "frobnicate"
        ));
    }

    #[test]
    fn base_pair_tally() {
        let seqs: Vec<Vec<&str>> = vec![vec!["open", "read", "open", "read"], vec!["read", "close"]];
        let deltas = base_pair_deltas(seqs.iter().map(Vec::as_slice));
        assert_eq!(
            deltas,
            vec![
                BasePairDelta { from: "open".into(), to: "read".into(), count: 2 },
                BasePairDelta { from: "read".into(), to: "open".into(), count: 1 },
                BasePairDelta { from: "read".into(), to: "close".into(), count: 1 },
            ]
        );
    }

    fn two_by_two(a: [f64; 2]) -> Rpm {
        Rpm::new(SquareMatrix::from_rows(&[a, [0.0, 0.0]])).unwrap()
    }

    #[test]
    fn combine_worked_rows() {
        let n = two_by_two([0.5, 0.5]);
        let a = two_by_two([1.0, 0.0]);
        let r = combine_rpms(&n, &a, CombineWeights::new(1.0, 1.0).unwrap()).unwrap();
        assert!((r.get(0, 0) - 0.75).abs() < 1e-12);
        assert!((r.get(0, 1) - 0.25).abs() < 1e-12);
        let r = combine_rpms(&n, &a, CombineWeights::new(1.0, 2.0).unwrap()).unwrap();
        assert!((r.get(0, 0) - 5.0 / 6.0).abs() < 1e-12);
        assert!((r.get(0, 1) - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(r.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn combine_dimension_mismatch() {
        let r = combine_rpms(&Rpm::zeros(2), &Rpm::zeros(3), CombineWeights::default());
        assert!(matches!(r, Err(LearnError::DimensionMismatch(2, 3))));
    }

    #[test]
    fn weights_parse_and_validate() {
        let w = CombineWeights::parse("1:2").unwrap();
        assert_eq!((w.normal(), w.abnormal()), (1.0, 2.0));
        assert!(CombineWeights::parse("0:1").is_err());
        assert!(CombineWeights::parse("1").is_err());
        assert!(CombineWeights::parse("x:1").is_err());
        assert!(CombineWeights::new(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn chain_probability() {
        let rpm = Rpm::new(SquareMatrix::from_rows(&[
            [0.0, 2.0 / 3.0, 1.0 / 3.0],
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0],
        ]))
        .unwrap();
        let a = SyscallId(0);
        let b = SyscallId(1);
        let p = sequence_probability(&[a], &rpm, &[0.5, 0.5, 0.0]).unwrap();
        assert_eq!(p, 0.5);
        let p = sequence_probability(&[a, b, a], &rpm, &[1.0, 0.0, 0.0]).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
        let p = sequence_probability(&[a, SyscallId(2), a], &rpm, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(p, 0.0);
        assert!(matches!(
            sequence_probability(&[], &rpm, &[1.0, 0.0, 0.0]),
            Err(LearnError::EmptySequence)
        ));
        assert!(sequence_probability(&[a], &rpm, &[0.5, 0.0, 0.0]).is_err());
    }

    #[test]
    fn chain_unit_factor() {
        let rpm = Rpm::new(SquareMatrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]])).unwrap();
        let p = sequence_probability(&[SyscallId(0), SyscallId(1)], &rpm, &[0.5, 0.5]).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn first_call_frequencies() {
        let c = corpus(&["a|b", "a|c", "b"]);
        assert_eq!(first_call_distribution(&c), vec![2.0 / 3.0, 1.0 / 3.0, 0.0]);
        let empty = Corpus::new(Vocabulary::from_names(["x", "y"]));
        assert_eq!(first_call_distribution(&empty), vec![0.5, 0.5]);
    }

    #[test]
    fn projection_drops_missing_and_renormalizes() {
        let from = Vocabulary::from_names(["a", "gone", "b"]);
        let rpm = Rpm::new(SquareMatrix::from_rows(&[
            [0.0, 0.5, 0.5],
            [1.0, 0.0, 0.0],
            [0.25, 0.75, 0.0],
        ]))
        .unwrap();
        let to = Vocabulary::from_names(["b", "a", "new"]);
        let p = rpm.project(&from, &to);
        // a -> b only; b -> a only; new has no row.
        assert_eq!(p.row(1), &[1.0, 0.0, 0.0]);
        assert_eq!(p.row(0), &[0.0, 1.0, 0.0]);
        assert_eq!(p.row(2), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn rpm_invariant_checked() {
        assert!(Rpm::new(SquareMatrix::from_rows(&[[0.5, 0.6], [0.0, 0.0]])).is_err());
        assert!(Rpm::new(SquareMatrix::from_rows(&[[0.5, 0.5], [0.0, 0.0]])).is_ok());
    }

    #[test]
    fn rpm_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rpm.json");
        let c = corpus(&["a|b|a|c", "a|b"]);
        let rpm = learn_rpm(&c);
        save_rpm(&rpm, &c.vocabulary, &path).unwrap();
        let (loaded, vocab) = load_rpm(&path).unwrap();
        assert_eq!(loaded, rpm);
        assert_eq!(vocab, c.vocabulary);
    }

    #[test]
    fn rpm_file_row_sum_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rpm.json");
        std::fs::write(
            &path,
            r#"{"version":1,"vocabulary":["a","b"],"rows":[{"i":0,"entries":[[0,0.75],[1,0.75]]}]}"#,
        )
        .unwrap();
        assert!(matches!(load_rpm(&path), Err(MatrixFileError::RowSum { .. })));
        assert!(matches!(
            load_rpm(&dir.path().join("missing.json")),
            Err(MatrixFileError::Io { .. })
        ));
    }
}
