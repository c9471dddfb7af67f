//! Shipped simulated-kernel specs and synthetic historic corpora.
//!
//! `tiny`, `medium` and `deep` are the current kernels. `medium_legacy`
//! and `deep_legacy` model an older release of the same interface: some
//! calls are renamed or missing and the planted crashes only partly
//! overlap. Corpora collected on the legacy kernels stand in for a
//! historic trace dataset.

use rand::Rng;

use crate::bigram::{self, combine_rpms, CombineWeights, Rpm};
use crate::choice_table::init_act;
use crate::generator::{gen_unidirectional_with, rng_from_seed, GenConfig};
use crate::simkernel::{trace_of, SimKernel, SimKernelSpec};
use crate::trace::{Corpus, Label, SyscallId, Trace, Vocabulary};

pub const TINY: &str = include_str!("../fixtures/tiny.json");
pub const MEDIUM: &str = include_str!("../fixtures/medium.json");
pub const MEDIUM_LEGACY: &str = include_str!("../fixtures/medium_legacy.json");
pub const DEEP: &str = include_str!("../fixtures/deep.json");
pub const DEEP_LEGACY: &str = include_str!("../fixtures/deep_legacy.json");

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: &[&str] = &["tiny", "medium", "medium_legacy", "deep", "deep_legacy"];

pub fn builtin_spec(name: &str) -> Option<SimKernelSpec> {
    let text = match name {
        "tiny" => TINY,
        "medium" => MEDIUM,
        "medium_legacy" => MEDIUM_LEGACY,
        "deep" => DEEP,
        "deep_legacy" => DEEP_LEGACY,
        _ => return None,
    };
    Some(SimKernelSpec::from_json(text).expect("shipped fixture parses"))
}

/// A shipped kernel by name. Panics on unknown names.
pub fn builtin(name: &str) -> SimKernel {
    let spec = builtin_spec(name).unwrap_or_else(|| panic!("no builtin kernel {name:?}"));
    SimKernel::new(spec).expect("shipped fixture is valid")
}

/// Shape of a synthetic historic corpus.
#[derive(Clone, Copy, Debug)]
pub struct HistoricCorpus {
    /// Workload programs executed for normal traces.
    pub generated: usize,
    pub length: usize,
    /// Chance of an unrelated call after each workload call.
    pub noise: f64,
    /// Reproducers per crash pattern, each wrapped in random context.
    pub reproducers_per_pattern: usize,
    pub seed: u64,
}

impl Default for HistoricCorpus {
    fn default() -> Self {
        Self {
            generated: 2000,
            length: 12,
            noise: 0.3,
            reproducers_per_pattern: 40,
            seed: 0x5eed,
        }
    }
}

/// Collects a labeled corpus on `kernel`: normal traces come from workload
/// programs that set up what each of a few randomly chosen calls needs and
/// then run it, abnormal traces from crash reproducers surrounded by
/// random calls.
pub fn historic_corpus(kernel: &SimKernel, shape: HistoricCorpus) -> Corpus {
    let mut rng = rng_from_seed(shape.seed);
    let act = init_act(&kernel.static_choice_table());
    let start = kernel.start_set();
    let mut corpus = Corpus::new(kernel.vocabulary().clone());

    for _ in 0..shape.generated {
        let mut seq = Vec::new();
        while seq.len() < shape.length {
            let goals: Vec<SyscallId> = (0..rng.gen_range(1..=3))
                .map(|_| SyscallId(rng.gen_range(0..kernel.len())))
                .collect();
            for id in kernel.plan(&goals) {
                seq.push(id);
                if rng.gen_bool(shape.noise) {
                    seq.push(SyscallId(rng.gen_range(0..kernel.len())));
                }
            }
        }
        seq.truncate(shape.length);
        let outcome = kernel.execute(&seq).expect("own vocabulary");
        if let Some(trace) = trace_of(&outcome, &seq) {
            corpus.traces.push(trace);
        }
    }

    for k in 0..kernel.crash_patterns().len() {
        let poc = kernel.reproducer(k);
        for _ in 0..shape.reproducers_per_pattern {
            let before = rng.gen_range(0..4);
            let after = rng.gen_range(0..4);
            let mut seq = Vec::new();
            if before > 0 {
                let cfg = GenConfig::new(before, 0, start.clone());
                seq.extend(gen_unidirectional_with(&act, &cfg, &mut rng).expect("valid config"));
            }
            seq.extend_from_slice(&poc);
            for _ in 0..after {
                seq.push(SyscallId(rng.gen_range(0..kernel.len())));
            }
            let outcome = kernel.execute(&seq).expect("own vocabulary");
            if outcome.crash.is_some() {
                corpus.traces.push(Trace::new(Label::Abnormal, seq));
            }
        }
    }
    corpus
}

/// Normal and abnormal RPMs trained on a historic corpus, indexed by the
/// corpus vocabulary.
pub fn pretrained_rpms(corpus: &Corpus) -> (Rpm, Rpm) {
    bigram::learn_by_label(corpus)
}

/// Normal and abnormal RPMs from the default historic corpus of the named
/// builtin kernel, with that kernel's vocabulary.
pub fn historic_rpms(name: &str) -> (Rpm, Rpm, Vocabulary) {
    let kernel = builtin(name);
    let corpus = historic_corpus(&kernel, HistoricCorpus::default());
    let (normal, abnormal) = pretrained_rpms(&corpus);
    (normal, abnormal, corpus.vocabulary)
}

/// Historic RPMs of `historic` projected onto `current`'s calls by name and
/// combined with `weights`.
pub fn historic_dtn(historic: &str, current: &SimKernel, weights: CombineWeights) -> Rpm {
    let (normal, abnormal, vocab) = historic_rpms(historic);
    let target = current.vocabulary();
    combine_rpms(&normal.project(&vocab, target), &abnormal.project(&vocab, target), weights)
        .expect("projected to one size")
}
