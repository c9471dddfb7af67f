//! Deterministic simulated kernel used as desk-scale ground truth.
//!
//! Each syscall produces and consumes named resource kinds. A call whose
//! consumed kinds have not all been produced earlier in the sequence fails,
//! and execution continues with the next call. A successful call hits the
//! branch `(call, held resources within its scope)`, where the scope is what
//! the call consumes plus everything else derived from those inputs, so
//! longer dependency chains open up more branches. A crash pattern fires
//! when its calls appear, in order, among the successful calls.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::choice_table::ChoiceTable;
use crate::matrix::SquareMatrix;
use crate::trace::{Label, SyscallId, Trace, Vocabulary};

/// Static weight between calls that share no resource.
pub const STATIC_FLOOR: f64 = 0.1;
/// Static weight from a producer to a consumer of the same resource.
pub const STATIC_LINK: f64 = 1.0;

/// Resource kinds are tracked in a `u64` mask.
pub const MAX_RESOURCE_KINDS: usize = 64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown syscall {0:?}")]
    UnknownSyscall(String),
    #[error("invalid kernel spec: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyscallDecl {
    pub name: String,
    #[serde(default)]
    pub produces: BTreeSet<String>,
    #[serde(default)]
    pub consumes: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashPattern {
    pub calls: Vec<String>,
    pub label: String,
}

/// Declared interface of the simulated kernel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimKernelSpec {
    pub syscalls: Vec<SyscallDecl>,
    #[serde(default)]
    pub crash_patterns: Vec<CrashPattern>,
}

impl SimKernelSpec {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let spec = Self::from_json(&text).map_err(|e| SimError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |m: String| Err(SimError::InvalidSpec(m));
        if self.syscalls.is_empty() {
            return invalid("no syscalls declared".into());
        }
        let mut names = HashSet::new();
        let mut produced = HashSet::new();
        for decl in &self.syscalls {
            if decl.name.is_empty() || decl.name.contains(|c: char| c.is_whitespace() || c == '|') {
                return invalid(format!("bad syscall name {:?}", decl.name));
            }
            if !names.insert(decl.name.as_str()) {
                return invalid(format!("duplicate syscall {:?}", decl.name));
            }
            produced.extend(decl.produces.iter().map(String::as_str));
        }
        for decl in &self.syscalls {
            if let Some(kind) = decl.consumes.iter().find(|k| !produced.contains(k.as_str())) {
                return invalid(format!("{} consumes {kind:?} which nothing produces", decl.name));
            }
        }
        let kinds: BTreeSet<&String> = self
            .syscalls
            .iter()
            .flat_map(|d| d.produces.iter().chain(&d.consumes))
            .collect();
        if kinds.len() > MAX_RESOURCE_KINDS {
            return invalid(format!("{} resource kinds exceed {MAX_RESOURCE_KINDS}", kinds.len()));
        }
        for p in &self.crash_patterns {
            if p.calls.is_empty() {
                return invalid(format!("crash pattern {:?} is empty", p.label));
            }
            if let Some(c) = p.calls.iter().find(|c| !names.contains(c.as_str())) {
                return invalid(format!("crash pattern {:?} names unknown call {c:?}", p.label));
            }
        }
        Ok(())
    }

    /// Vocabulary in declaration order.
    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::from_names(self.syscalls.iter().map(|d| &d.name))
    }
}

/// Identifies one simulated branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct BranchId {
    pub call: u32,
    /// Bit `k` set when in-scope resource kind `k` was held as the call ran.
    pub held: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecutionOutcome {
    pub executed_prefix_len: usize,
    pub valid: bool,
    pub succeeded: Vec<bool>,
    pub branches_hit: BTreeSet<BranchId>,
    pub crash: Option<String>,
}

impl ExecutionOutcome {
    /// Calls that succeeded, in execution order.
    pub fn successful_calls(&self, seq: &[SyscallId]) -> Vec<SyscallId> {
        seq.iter()
            .zip(&self.succeeded)
            .filter(|(_, &ok)| ok)
            .map(|(&id, _)| id)
            .collect()
    }
}

#[derive(Clone, Debug)]
struct CompiledCall {
    produces: u64,
    consumes: u64,
    /// Kinds whose presence changes this call's behavior.
    scope: u64,
}

/// A validated spec compiled to bit masks. Syscall ids are declaration
/// indices, matching [`SimKernelSpec::vocabulary`].
#[derive(Clone, Debug)]
pub struct SimKernel {
    spec: SimKernelSpec,
    vocab: Vocabulary,
    calls: Vec<CompiledCall>,
    kinds: Vec<String>,
    patterns: Vec<Vec<SyscallId>>,
}

impl SimKernel {
    pub fn new(spec: SimKernelSpec) -> Result<Self, SimError> {
        spec.validate()?;
        let vocab = spec.vocabulary();
        let kinds: Vec<String> = spec
            .syscalls
            .iter()
            .flat_map(|d| d.produces.iter().chain(&d.consumes))
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let kind_bit: HashMap<&str, u64> = kinds
            .iter()
            .enumerate()
            .map(|(k, name)| (name.as_str(), 1u64 << k))
            .collect();
        let mask = |set: &BTreeSet<String>| set.iter().map(|k| kind_bit[k.as_str()]).fold(0, |a, b| a | b);
        let calls = spec
            .syscalls
            .iter()
            .map(|d| CompiledCall {
                produces: mask(&d.produces),
                consumes: mask(&d.consumes),
                scope: 0,
            })
            .collect();
        let calls = with_scopes(calls);
        let patterns = spec
            .crash_patterns
            .iter()
            .map(|p| p.calls.iter().map(|c| vocab.id(c).expect("validated")).collect())
            .collect();
        Ok(Self {
            spec,
            vocab,
            calls,
            kinds,
            patterns,
        })
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::new(SimKernelSpec::load(path)?)
    }

    pub fn spec(&self) -> &SimKernelSpec {
        &self.spec
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn resource_kinds(&self) -> &[String] {
        &self.kinds
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    /// Calls that need no resources and so can open a sequence.
    pub fn start_set(&self) -> Vec<SyscallId> {
        let free: Vec<SyscallId> = (0..self.calls.len())
            .filter(|&i| self.calls[i].consumes == 0)
            .map(SyscallId)
            .collect();
        if free.is_empty() {
            self.vocab.ids().collect()
        } else {
            free
        }
    }

    pub fn crash_patterns(&self) -> &[Vec<SyscallId>] {
        &self.patterns
    }

    /// Runs `seq` (ids of this kernel's vocabulary).
    pub fn execute(&self, seq: &[SyscallId]) -> Result<ExecutionOutcome, SimError> {
        if let Some(bad) = seq.iter().find(|id| id.index() >= self.calls.len()) {
            return Err(SimError::UnknownSyscall(bad.to_string()));
        }
        let mut held = 0u64;
        let mut succeeded = Vec::with_capacity(seq.len());
        let mut branches = BTreeSet::new();
        for &id in seq {
            let call = &self.calls[id.index()];
            let ok = call.consumes & !held == 0;
            if ok {
                branches.insert(BranchId {
                    call: id.index() as u32,
                    held: held & call.scope,
                });
                held |= call.produces;
            }
            succeeded.push(ok);
        }
        let successful: Vec<SyscallId> = seq
            .iter()
            .zip(&succeeded)
            .filter(|(_, &ok)| ok)
            .map(|(&id, _)| id)
            .collect();
        let crash = self
            .patterns
            .iter()
            .position(|p| is_subsequence(p, &successful))
            .map(|k| self.spec.crash_patterns[k].label.clone());
        Ok(ExecutionOutcome {
            executed_prefix_len: seq.len(),
            valid: succeeded.iter().all(|&ok| ok),
            succeeded,
            branches_hit: branches,
            crash,
        })
    }

    /// Runs `seq` whose ids come from another vocabulary, mapping by name.
    pub fn execute_named(
        &self,
        seq: &[SyscallId],
        vocab: &Vocabulary,
    ) -> Result<ExecutionOutcome, SimError> {
        let mapped = seq
            .iter()
            .map(|&id| {
                let name = vocab.name(id);
                self.vocab
                    .id(name)
                    .ok_or_else(|| SimError::UnknownSyscall(name.to_owned()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.execute(&mapped)
    }

    /// Static choice table: [`STATIC_LINK`] where `i` produces something `j`
    /// consumes, [`STATIC_FLOOR`] everywhere else.
    pub fn static_choice_table(&self) -> ChoiceTable {
        let m = self.calls.len();
        let mut w = SquareMatrix::filled(m, STATIC_FLOOR);
        for (i, ci) in self.calls.iter().enumerate() {
            for (j, cj) in self.calls.iter().enumerate() {
                if ci.produces & cj.consumes != 0 {
                    w.set(i, j, STATIC_LINK);
                }
            }
        }
        ChoiceTable::from_static(w).expect("floor gives every row support")
    }

    /// Number of distinct branches reachable from an empty resource set.
    pub fn branch_space_size(&self) -> usize {
        let mut seen = HashSet::from([0u64]);
        let mut queue = VecDeque::from([0u64]);
        let mut branches = HashSet::new();
        while let Some(held) = queue.pop_front() {
            for (i, call) in self.calls.iter().enumerate() {
                if call.consumes & !held == 0 {
                    branches.insert((i, held & call.scope));
                    let next = held | call.produces;
                    if seen.insert(next) {
                        queue.push_back(next);
                    }
                }
            }
        }
        branches.len()
    }

    /// A short sequence triggering crash pattern `k`.
    pub fn reproducer(&self, k: usize) -> Vec<SyscallId> {
        self.plan(&self.patterns[k])
    }

    /// Runs `goals` in order, each preceded by producers for whatever it
    /// still lacks, so every call in the result succeeds.
    pub fn plan(&self, goals: &[SyscallId]) -> Vec<SyscallId> {
        let mut seq = Vec::new();
        let mut held = 0u64;
        for &id in goals {
            self.satisfy(self.calls[id.index()].consumes, &mut held, &mut seq, 0);
            seq.push(id);
            held |= self.calls[id.index()].produces;
        }
        seq
    }

    fn satisfy(&self, need: u64, held: &mut u64, seq: &mut Vec<SyscallId>, depth: usize) {
        if depth > self.calls.len() {
            return;
        }
        for bit in 0..MAX_RESOURCE_KINDS {
            let kind = 1u64 << bit;
            if need & kind == 0 || *held & kind != 0 {
                continue;
            }
            // First declared producer of this kind.
            if let Some(p) = self.calls.iter().position(|c| c.produces & kind != 0) {
                self.satisfy(self.calls[p].consumes, held, seq, depth + 1);
                seq.push(SyscallId(p));
                *held |= self.calls[p].produces;
            }
        }
    }
}

/// A call's scope is what it consumes plus the other objects hanging off
/// those inputs: closing an fd behaves differently once it is mapped or
/// locked. Objects the call itself creates, and their descendants, are left
/// out.
fn with_scopes(mut calls: Vec<CompiledCall>) -> Vec<CompiledCall> {
    let derived_from = |kinds: u64| -> u64 {
        let mut out = 0u64;
        let mut frontier = kinds;
        while frontier != 0 {
            let mut next = 0u64;
            for c in &calls {
                if c.consumes & frontier != 0 {
                    next |= c.produces & !out & !kinds;
                }
            }
            out |= next;
            frontier = next;
        }
        out
    };
    let scopes: Vec<u64> = calls
        .iter()
        .map(|c| {
            let own = c.produces | derived_from(c.produces);
            c.consumes | (derived_from(c.consumes) & !own)
        })
        .collect();
    for (c, s) in calls.iter_mut().zip(scopes) {
        c.scope = s;
    }
    calls
}

/// `needle` occurs in `haystack` in order, not necessarily adjacently.
pub fn is_subsequence<T: PartialEq>(needle: &[T], haystack: &[T]) -> bool {
    let mut it = haystack.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

/// Convenience wrapper over [`SimKernel::execute_named`].
pub fn execute(
    spec: &SimKernelSpec,
    seq: &[SyscallId],
    vocab: &Vocabulary,
) -> Result<ExecutionOutcome, SimError> {
    SimKernel::new(spec.clone())?.execute_named(seq, vocab)
}

/// Static choice table over `vocab` (which must name exactly the spec's
/// calls, in any order).
pub fn spec_to_static_ct(spec: &SimKernelSpec, vocab: &Vocabulary) -> Result<ChoiceTable, SimError> {
    let kernel = SimKernel::new(spec.clone())?;
    if vocab.len() != kernel.len() {
        return Err(SimError::InvalidSpec(format!(
            "vocabulary has {} calls, spec has {}",
            vocab.len(),
            kernel.len()
        )));
    }
    let map = vocab
        .names()
        .iter()
        .map(|n| kernel.vocab.id(n).ok_or_else(|| SimError::UnknownSyscall(n.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let native = kernel.static_choice_table();
    let m = vocab.len();
    let mut w = SquareMatrix::zeros(m);
    for i in 0..m {
        for j in 0..m {
            w.set(i, j, native.static_weights().at(map[i], map[j]));
        }
    }
    Ok(ChoiceTable::from_static(w).expect("floor gives every row support"))
}

/// Labels an executed sequence: crashes give an abnormal trace of the
/// executed prefix, clean runs a normal trace of the whole sequence, and
/// other invalid runs a normal trace of their successful calls (or nothing
/// when no call succeeded).
pub fn trace_of(outcome: &ExecutionOutcome, seq: &[SyscallId]) -> Option<Trace> {
    if outcome.crash.is_some() {
        return Some(Trace::new(
            Label::Abnormal,
            seq[..outcome.executed_prefix_len].to_vec(),
        ));
    }
    if outcome.valid {
        return Some(Trace::new(Label::Normal, seq.to_vec()));
    }
    let ok = outcome.successful_calls(seq);
    (!ok.is_empty()).then(|| Trace::new(Label::Normal, ok))
}
