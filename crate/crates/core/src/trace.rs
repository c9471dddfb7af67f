//! Syscall vocabulary, labeled traces and the two trace file formats.
//!
//! Pipe format: one trace per line, variant names joined by `|`
//! (`execve|brk|arch_prctl`). Variant format: one JSON array per line,
//! each element `{"name": ..., "variant": ...}` with `variant` optional.
//! Lines starting with `#` and blank lines are skipped in both.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Separator between a base syscall name and its parameter variant.
pub const VARIANT_SEPARATOR: char = '$';

/// Dense index of a syscall variant inside a [`Vocabulary`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SyscallId(pub usize);

impl SyscallId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for SyscallId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("empty trace")]
    EmptyTrace,
    #[error("malformed token {0:?}")]
    MalformedToken(String),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unknown syscall {0:?}")]
    UnknownSyscall(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {} malformed line(s), first at line {}", .errors.len(), .errors[0].0)]
    Aggregate {
        path: PathBuf,
        errors: Vec<(usize, TraceError)>,
    },
    #[error("invalid manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
}

/// Append-only bijection between variant names and [`SyscallId`]s.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    names: Vec<String>,
    lookup: HashMap<String, SyscallId>,
    bases: Vec<String>,
}

/// Base name of a variant: everything before the first `$`.
pub fn base_name(name: &str) -> &str {
    name.split_once(VARIANT_SEPARATOR)
        .map_or(name, |(base, _)| base)
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vocabulary registering `names` in order. Duplicates keep
    /// their first id.
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Self::new();
        for name in names {
            vocab.intern(name.as_ref());
        }
        vocab
    }

    /// Reads a pre-registration file: one variant name per line, `#`
    /// comments and blank lines ignored.
    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut vocab = Self::new();
        let mut errors = Vec::new();
        for (lineno, line) in numbered_lines(&text) {
            match validate_token(line) {
                Ok(()) => {
                    vocab.intern(line);
                }
                Err(e) => errors.push((lineno, e)),
            }
        }
        if errors.is_empty() {
            Ok(vocab)
        } else {
            Err(TraceError::Aggregate {
                path: path.to_path_buf(),
                errors,
            })
        }
    }

    /// Returns the id of `name`, registering it if absent.
    pub fn intern(&mut self, name: &str) -> SyscallId {
        if let Some(&id) = self.lookup.get(name) {
            return id;
        }
        let id = SyscallId(self.names.len());
        self.names.push(name.to_owned());
        self.bases.push(base_name(name).to_owned());
        self.lookup.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<SyscallId> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, id: SyscallId) -> &str {
        &self.names[id.index()]
    }

    pub fn base_of(&self, id: SyscallId) -> &str {
        &self.bases[id.index()]
    }

    /// All registered variants sharing `base`, in id order.
    pub fn variants_of(&self, base: &str) -> Vec<SyscallId> {
        self.bases
            .iter()
            .enumerate()
            .filter(|(_, b)| b.as_str() == base)
            .map(|(i, _)| SyscallId(i))
            .collect()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ids(&self) -> impl Iterator<Item = SyscallId> {
        (0..self.names.len()).map(SyscallId)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Abnormal,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Normal => "normal",
            Label::Abnormal => "abnormal",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Trace {
    pub label: Label,
    pub calls: Vec<SyscallId>,
}

impl Trace {
    pub fn new(label: Label, calls: Vec<SyscallId>) -> Self {
        Self { label, calls }
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    /// Renders the trace in pipe format.
    pub fn to_pipe(&self, vocab: &Vocabulary) -> String {
        to_pipe_line(&self.calls, vocab)
    }
}

/// Renders a call list as one pipe-format line.
pub fn to_pipe_line(calls: &[SyscallId], vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for (k, &id) in calls.iter().enumerate() {
        if k > 0 {
            out.push('|');
        }
        out.push_str(vocab.name(id));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    Pipe,
    Variant,
}

#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub vocabulary: Vocabulary,
    pub traces: Vec<Trace>,
}

/// Number of traces per label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub normal: usize,
    pub abnormal: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.normal + self.abnormal
    }
}

impl Corpus {
    pub fn new(vocabulary: Vocabulary) -> Self {
        Self {
            vocabulary,
            traces: Vec::new(),
        }
    }

    pub fn counts_by_label(&self) -> LabelCounts {
        let mut counts = LabelCounts::default();
        for trace in &self.traces {
            match trace.label {
                Label::Normal => counts.normal += 1,
                Label::Abnormal => counts.abnormal += 1,
            }
        }
        counts
    }

    /// Sub-corpus holding only traces with `label`, sharing the vocabulary.
    pub fn with_label(&self, label: Label) -> Corpus {
        Corpus {
            vocabulary: self.vocabulary.clone(),
            traces: self
                .traces
                .iter()
                .filter(|t| t.label == label)
                .cloned()
                .collect(),
        }
    }

    /// Appends every trace of a file to this corpus.
    pub fn load_file(
        &mut self,
        path: &Path,
        format: TraceFormat,
        label: Label,
    ) -> Result<(), TraceError> {
        let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut errors = Vec::new();
        let mut parsed = Vec::new();
        for (lineno, line) in numbered_lines(&text) {
            let result = match format {
                TraceFormat::Pipe => parse_pipe_trace(line, &mut self.vocabulary, label),
                TraceFormat::Variant => parse_variant_trace(line, &mut self.vocabulary, label),
            };
            match result {
                Ok(trace) => parsed.push(trace),
                Err(e) => errors.push((lineno, e)),
            }
        }
        if !errors.is_empty() {
            return Err(TraceError::Aggregate {
                path: path.to_path_buf(),
                errors,
            });
        }
        self.traces.extend(parsed);
        Ok(())
    }
}

/// Raw pipe-format token lists of a file, for name-only corpora that are
/// not resolved against a vocabulary.
pub fn load_pipe_tokens(path: &Path) -> Result<Vec<Vec<String>>, TraceError> {
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut errors = Vec::new();
    let mut out = Vec::new();
    for (lineno, line) in numbered_lines(&text) {
        match split_pipe_tokens(line) {
            Ok(tokens) => out.push(tokens.into_iter().map(str::to_owned).collect()),
            Err(e) => errors.push((lineno, e)),
        }
    }
    if !errors.is_empty() {
        return Err(TraceError::Aggregate {
            path: path.to_path_buf(),
            errors,
        });
    }
    Ok(out)
}

/// Non-comment, non-blank lines with their 1-based line numbers.
pub(crate) fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn validate_token(token: &str) -> Result<(), TraceError> {
    if token.is_empty() || token.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return Err(TraceError::MalformedToken(token.to_owned()));
    }
    Ok(())
}

/// Splits one pipe-format line into validated tokens without touching any
/// vocabulary.
pub fn split_pipe_tokens(line: &str) -> Result<Vec<&str>, TraceError> {
    let line = line.trim();
    if line.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    let tokens: Vec<&str> = line.split('|').collect();
    for token in &tokens {
        validate_token(token)?;
    }
    Ok(tokens)
}

/// Parses a pipe-format line, registering unseen names in `vocab`.
///
/// All tokens are validated before any is registered, so a failed parse
/// leaves the vocabulary untouched.
pub fn parse_pipe_trace(
    line: &str,
    vocab: &mut Vocabulary,
    label: Label,
) -> Result<Trace, TraceError> {
    let tokens = split_pipe_tokens(line)?;
    let calls = tokens.into_iter().map(|t| vocab.intern(t)).collect();
    Ok(Trace::new(label, calls))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariantRecord {
    name: String,
    #[serde(default)]
    variant: Option<String>,
}

/// Parses a variant-format line (a JSON array of `{name, variant?}` records).
pub fn parse_variant_trace(
    line: &str,
    vocab: &mut Vocabulary,
    label: Label,
) -> Result<Trace, TraceError> {
    let records: Vec<VariantRecord> = serde_json::from_str(line).map_err(|e| TraceError::Parse {
        // Single-line input: serde_json columns are 1-based byte positions.
        offset: e.column().saturating_sub(1),
        message: e.to_string(),
    })?;
    if records.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    let mut names = Vec::with_capacity(records.len());
    for record in records {
        validate_token(&record.name)?;
        if record.name.contains(VARIANT_SEPARATOR) {
            return Err(TraceError::MalformedToken(record.name));
        }
        let name = match record.variant {
            Some(v) => {
                validate_token(&v)?;
                format!("{}{VARIANT_SEPARATOR}{}", record.name, v)
            }
            None => record.name,
        };
        names.push(name);
    }
    let calls = names.iter().map(|n| vocab.intern(n)).collect();
    Ok(Trace::new(label, calls))
}

/// Loads one trace file into a fresh corpus.
pub fn load_corpus(path: &Path, format: TraceFormat, label: Label) -> Result<Corpus, TraceError> {
    let mut corpus = Corpus::default();
    corpus.load_file(path, format, label)?;
    Ok(corpus)
}

/// Lists of trace files per label sharing one format.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    #[serde(default)]
    pub normal: Vec<PathBuf>,
    #[serde(default)]
    pub abnormal: Vec<PathBuf>,
    pub format: TraceFormat,
}

impl CorpusManifest {
    /// Reads a manifest; relative trace paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut manifest: CorpusManifest =
            serde_json::from_str(&text).map_err(|e| TraceError::Manifest {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        let dir = path.parent().unwrap_or_else(|| Path::new(""));
        for p in manifest.normal.iter_mut().chain(manifest.abnormal.iter_mut()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(manifest)
    }

    pub fn paths(&self, label: Label) -> &[PathBuf] {
        match label {
            Label::Normal => &self.normal,
            Label::Abnormal => &self.abnormal,
        }
    }

    /// Loads the files for `labels` into one corpus over `vocabulary`.
    pub fn load_corpus(
        &self,
        vocabulary: Vocabulary,
        labels: &[Label],
    ) -> Result<Corpus, TraceError> {
        let mut corpus = Corpus::new(vocabulary);
        for &label in labels {
            for path in self.paths(label) {
                corpus.load_file(path, self.format, label)?;
            }
        }
        Ok(corpus)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pipe_trace_registers_in_order() {
        let mut vocab = Vocabulary::new();
        let t = parse_pipe_trace("execve|brk|arch_prctl", &mut vocab, Label::Normal).unwrap();
        assert_eq!(t.calls, vec![SyscallId(0), SyscallId(1), SyscallId(2)]);
        assert_eq!(vocab.name(SyscallId(2)), "arch_prctl");
        assert_eq!(vocab.base_of(SyscallId(2)), "arch_prctl");
    }

    #[test]
    fn pipe_single_and_repeated() {
        let mut vocab = Vocabulary::new();
        let t = parse_pipe_trace("open", &mut vocab, Label::Normal).unwrap();
        assert_eq!(t.len(), 1);

        let mut vocab = Vocabulary::new();
        let t = parse_pipe_trace("a|b|a", &mut vocab, Label::Normal).unwrap();
        assert_eq!(t.calls, vec![SyscallId(0), SyscallId(1), SyscallId(0)]);
    }

    #[test]
    fn pipe_errors() {
        let mut vocab = Vocabulary::new();
        assert!(matches!(
            parse_pipe_trace("   ", &mut vocab, Label::Normal),
            Err(TraceError::EmptyTrace)
        ));
        assert!(matches!(
            parse_pipe_trace("open|re ad", &mut vocab, Label::Normal),
            Err(TraceError::MalformedToken(t)) if t == "re ad"
        ));
        assert!(matches!(
            parse_pipe_trace("open||read", &mut vocab, Label::Normal),
            Err(TraceError::MalformedToken(_))
        ));
        assert!(matches!(
            parse_pipe_trace("open|\u{7}", &mut vocab, Label::Normal),
            Err(TraceError::MalformedToken(_))
        ));
        // Failed parses never grow the vocabulary.
        assert!(vocab.is_empty());
    }

    #[test]
    fn variant_trace_names() {
        let mut vocab = Vocabulary::new();
        let t = parse_variant_trace(
            r#"[{"name":"open","variant":"O_RDONLY"},{"name":"read"}]"#,
            &mut vocab,
            Label::Normal,
        )
        .unwrap();
        assert_eq!(vocab.name(t.calls[0]), "open$O_RDONLY");
        assert_eq!(vocab.name(t.calls[1]), "read");
        assert_eq!(vocab.base_of(t.calls[0]), "open");
    }

    #[test]
    fn variant_trace_distinct_variants_share_base() {
        let mut vocab = Vocabulary::new();
        let t = parse_variant_trace(
            r#"[{"name":"open","variant":"A"},{"name":"open","variant":"B"}]"#,
            &mut vocab,
            Label::Abnormal,
        )
        .unwrap();
        assert_ne!(t.calls[0], t.calls[1]);
        assert_eq!(vocab.variants_of("open"), t.calls);
    }

    #[test]
    fn variant_trace_errors() {
        let mut vocab = Vocabulary::new();
        assert!(matches!(
            parse_variant_trace("[]", &mut vocab, Label::Normal),
            Err(TraceError::EmptyTrace)
        ));
        match parse_variant_trace(r#"[{"name":"open"},"#, &mut vocab, Label::Normal) {
            Err(TraceError::Parse { offset, .. }) => assert!(offset >= 16, "offset {offset}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_variant_trace(r#"[{"nom":"open"}]"#, &mut vocab, Label::Normal),
            Err(TraceError::Parse { .. })
        ));
        assert!(matches!(
            parse_variant_trace(r#"[{"name":"a$b"}]"#, &mut vocab, Label::Normal),
            Err(TraceError::MalformedToken(_))
        ));
    }

    #[test]
    fn base_split() {
        assert_eq!(base_name("open$O_RDONLY"), "open");
        assert_eq!(base_name("read"), "read");
    }

    proptest! {
        #[test]
        fn pipe_round_trip(calls in proptest::collection::vec(0usize..6, 1..20)) {
            let names = ["open", "read", "write$x", "close", "mmap", "brk"];
            let vocab = Vocabulary::from_names(names);
            let trace = Trace::new(Label::Normal, calls.iter().map(|&c| SyscallId(c)).collect());
            let line = trace.to_pipe(&vocab);
            let mut reparsed_vocab = vocab.clone();
            let reparsed = parse_pipe_trace(&line, &mut reparsed_vocab, Label::Normal).unwrap();
            prop_assert_eq!(reparsed.calls, trace.calls);
            prop_assert_eq!(reparsed_vocab, vocab);
        }

        #[test]
        fn vocabulary_is_append_only(lines in proptest::collection::vec("[a-d]{1,2}(\\|[a-d]{1,2}){0,5}", 1..8)) {
            let mut vocab = Vocabulary::new();
            for line in &lines {
                let before: Vec<String> = vocab.names().to_vec();
                parse_pipe_trace(line, &mut vocab, Label::Normal).unwrap();
                prop_assert_eq!(&vocab.names()[..before.len()], &before[..]);
                for (i, name) in vocab.names().iter().enumerate() {
                    prop_assert_eq!(vocab.id(name), Some(SyscallId(i)));
                }
            }
        }
    }
}
