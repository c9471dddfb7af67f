//! Desk-scale fuzzing campaigns against the simulated kernel.
//!
//! Strategy letters:
//! - `D`: a pretrained RPM from historic traces is added to the table and
//!   consulted by the random walk,
//! - `C`: an RPM relearned from the minimized corpus at every table update,
//! - `R`: sequences come from the bidirectional random walk instead of
//!   forward expansion.
//!
//! The coordinator owns all state. With `workers > 1` a batch of sequences
//! is generated and executed in parallel against one table snapshot and
//! the outcomes are folded in iteration order.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bigram::{self, combine_rpms, CombineWeights, LearnError, Rpm};
use crate::choice_table::{
    fmt_f64, init_act, shannon_index, should_update, transform_rpm, update_act,
    AugmentedChoiceTable, ChoiceTable, ChoiceTableError, EntropyReport, UpdatePolicy,
};
use crate::generator::{gen_random_walk_traced, gen_unidirectional_with, GenConfig, GenError};
use crate::matrix::SquareMatrix;
use crate::matrix_file::{write_atomic, MatrixFileError};
use crate::simkernel::{trace_of, BranchId, ExecutionOutcome, SimError, SimKernel};
use crate::trace::{Label, SyscallId, Trace};

pub const DEFAULT_SAMPLE_INTERVAL: usize = 100;
pub const DEFAULT_CRASH_CAP: u64 = 100;
pub const DEFAULT_SEQ_LENGTH: usize = 30;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid campaign config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Kernel(#[from] SimError),
    #[error(transparent)]
    Matrix(#[from] MatrixFileError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Table(#[from] ChoiceTableError),
    #[error(transparent)]
    Generate(#[from] GenError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Enabled subset of the `D`, `C` and `R` strategies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Strategies {
    pub dongting: bool,
    pub corpus: bool,
    pub random_walk: bool,
}

impl Strategies {
    pub const NONE: Strategies = Strategies {
        dongting: false,
        corpus: false,
        random_walk: false,
    };
    pub const ALL: Strategies = Strategies {
        dongting: true,
        corpus: true,
        random_walk: true,
    };

    pub fn is_baseline(&self) -> bool {
        *self == Self::NONE
    }
}

impl FromStr for Strategies {
    type Err = CampaignError;

    /// Any combination of `C`, `R`, `D`; empty, `-` or `baseline` for none.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = Strategies::NONE;
        let s = s.trim();
        if s.is_empty() || s == "-" || s.eq_ignore_ascii_case("baseline") {
            return Ok(out);
        }
        for c in s.chars() {
            let flag = match c.to_ascii_uppercase() {
                'D' => &mut out.dongting,
                'C' => &mut out.corpus,
                'R' => &mut out.random_walk,
                _ => return Err(CampaignError::Config(format!("unknown strategy letter {c:?} in {s:?}"))),
            };
            if std::mem::replace(flag, true) {
                return Err(CampaignError::Config(format!("strategy {c:?} repeated in {s:?}")));
            }
        }
        Ok(out)
    }
}

impl TryFrom<String> for Strategies {
    type Error = CampaignError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Strategies> for String {
    fn from(s: Strategies) -> String {
        s.to_string()
    }
}

impl fmt::Display for Strategies {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_baseline() {
            return f.write_str("baseline");
        }
        for (on, c) in [(self.corpus, 'C'), (self.random_walk, 'R'), (self.dongting, 'D')] {
            if on {
                write!(f, "{c}")?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainedPaths {
    pub normal: PathBuf,
    pub abnormal: PathBuf,
}

fn default_weights() -> CombineWeights {
    CombineWeights::default()
}
fn default_seq_length() -> usize {
    DEFAULT_SEQ_LENGTH
}
fn default_sample_interval() -> usize {
    DEFAULT_SAMPLE_INTERVAL
}
fn default_crash_cap() -> u64 {
    DEFAULT_CRASH_CAP
}
fn default_workers() -> usize {
    1
}

/// Campaign configuration, loadable from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    /// Kernel spec file, or `builtin:<name>` for a shipped fixture.
    pub spec_path: PathBuf,
    #[serde(default)]
    pub strategies: Strategies,
    #[serde(default = "default_weights")]
    pub weights: CombineWeights,
    pub iterations: usize,
    #[serde(default = "default_seq_length")]
    pub seq_length: usize,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub pretrained_rpm_paths: Option<PretrainedPaths>,
    #[serde(default)]
    pub report_dir: Option<PathBuf>,
    #[serde(default = "default_sample_interval")]
    pub sample_interval: usize,
    #[serde(default = "default_crash_cap")]
    pub crash_cap: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl CampaignConfig {
    pub fn new(spec_path: impl Into<PathBuf>, strategies: Strategies, iterations: usize, rng_seed: u64) -> Self {
        Self {
            spec_path: spec_path.into(),
            strategies,
            weights: CombineWeights::default(),
            iterations,
            seq_length: DEFAULT_SEQ_LENGTH,
            rng_seed,
            pretrained_rpm_paths: None,
            report_dir: None,
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
            crash_cap: DEFAULT_CRASH_CAP,
            workers: 1,
        }
    }

    /// Reads a JSON config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg: CampaignConfig = serde_json::from_str(&text)
            .map_err(|e| CampaignError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or_else(|| Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() && !p.to_string_lossy().starts_with("builtin:") {
                *p = dir.join(&*p);
            }
        };
        resolve(&mut cfg.spec_path);
        if let Some(pre) = cfg.pretrained_rpm_paths.as_mut() {
            resolve(&mut pre.normal);
            resolve(&mut pre.abnormal);
        }
        if let Some(r) = cfg.report_dir.as_mut() {
            resolve(r);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        let bad = |m: &str| Err(CampaignError::Config(m.into()));
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if self.seq_length == 0 || self.seq_length > crate::generator::MAX_WALK_LENGTH {
            return bad("seq_length must be in 1..=64");
        }
        if self.sample_interval == 0 {
            return bad("sample_interval must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        if self.strategies.dongting && self.pretrained_rpm_paths.is_none() {
            return bad("strategy D requires pretrained_rpm_paths");
        }
        Ok(())
    }

    pub fn load_kernel(&self) -> Result<SimKernel, CampaignError> {
        let s = self.spec_path.to_string_lossy();
        if let Some(name) = s.strip_prefix("builtin:") {
            return crate::fixtures::builtin_spec(name)
                .ok_or_else(|| CampaignError::Config(format!("no builtin kernel {name:?}")))
                .and_then(|spec| Ok(SimKernel::new(spec)?));
        }
        if !self.spec_path.exists() {
            return Err(CampaignError::Config(format!(
                "spec file {} not found",
                self.spec_path.display()
            )));
        }
        Ok(SimKernel::load(&self.spec_path)?)
    }
}

/// Loads both pretrained RPMs, projects them onto `kernel`'s calls by name
/// and combines them with `weights`.
pub fn load_dtn(
    paths: &PretrainedPaths,
    weights: CombineWeights,
    kernel: &SimKernel,
) -> Result<Rpm, CampaignError> {
    let (normal, nv) = bigram::load_rpm(&paths.normal)?;
    let (abnormal, av) = bigram::load_rpm(&paths.abnormal)?;
    let target = kernel.vocabulary();
    Ok(combine_rpms(
        &normal.project(&nv, target),
        &abnormal.project(&av, target),
        weights,
    )?)
}

/// Everything needed to run a campaign, already resolved in memory.
#[derive(Clone, Debug)]
pub struct CampaignSetup {
    pub kernel: SimKernel,
    pub strategies: Strategies,
    pub iterations: usize,
    pub seq_length: usize,
    pub seed: u64,
    pub sample_interval: usize,
    pub crash_cap: u64,
    pub workers: usize,
    pub policy: UpdatePolicy,
    /// Combined pretrained RPM over the kernel's vocabulary; required by `D`.
    pub dtn: Option<Rpm>,
}

impl CampaignSetup {
    pub fn new(kernel: SimKernel, strategies: Strategies, iterations: usize, seed: u64) -> Self {
        Self {
            kernel,
            strategies,
            iterations,
            seq_length: DEFAULT_SEQ_LENGTH,
            seed,
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
            crash_cap: DEFAULT_CRASH_CAP,
            workers: 1,
            policy: UpdatePolicy::default(),
            dtn: None,
        }
    }

    pub fn from_config(cfg: &CampaignConfig) -> Result<Self, CampaignError> {
        cfg.validate()?;
        let kernel = cfg.load_kernel()?;
        let dtn = match (&cfg.pretrained_rpm_paths, cfg.strategies.dongting) {
            (Some(paths), true) => Some(load_dtn(paths, cfg.weights, &kernel)?),
            _ => None,
        };
        Ok(Self {
            kernel,
            strategies: cfg.strategies,
            iterations: cfg.iterations,
            seq_length: cfg.seq_length,
            seed: cfg.rng_seed,
            sample_interval: cfg.sample_interval,
            crash_cap: cfg.crash_cap,
            workers: cfg.workers,
            policy: UpdatePolicy::default(),
            dtn,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub cumulative_branches: usize,
    pub cumulative_unique_crashes: usize,
    pub mean_si: f64,
    pub act_generation: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CrashRecord {
    pub count: u64,
    pub first_iteration: usize,
}

/// Coordinator-owned campaign state.
#[derive(Clone, Debug)]
pub struct CampaignState {
    pub ct: ChoiceTable,
    pub act: Arc<AugmentedChoiceTable>,
    /// Pretrained RPM, zero when `D` is off.
    pub dtn: Rpm,
    /// On-the-fly RPM, zero until the first update with `C` on.
    pub corpus_n: Rpm,
    pub minimized_corpus: Vec<Trace>,
    seen_traces: HashSet<Vec<SyscallId>>,
    /// Iteration at which each corpus entry was admitted.
    pub admitted_at: Vec<usize>,
    pub new_since_update: usize,
    pub coverage: HashSet<BranchId>,
    pub crashes: BTreeMap<String, CrashRecord>,
    pending_feedback: Vec<(SyscallId, SyscallId)>,
    pub update_iterations: Vec<usize>,
    pub entropy: Vec<EntropyReport>,
    pub iterations_run: usize,
}

impl CampaignState {
    fn new(kernel: &SimKernel, dtn: Option<Rpm>) -> Self {
        let ct = kernel.static_choice_table();
        let act = init_act(&ct);
        let m = kernel.len();
        let entropy = vec![shannon_index(&act)];
        Self {
            ct,
            act: Arc::new(act),
            dtn: dtn.unwrap_or_else(|| Rpm::zeros(m)),
            corpus_n: Rpm::zeros(m),
            minimized_corpus: Vec::new(),
            seen_traces: HashSet::new(),
            admitted_at: Vec::new(),
            new_since_update: 0,
            coverage: HashSet::new(),
            crashes: BTreeMap::new(),
            pending_feedback: Vec::new(),
            update_iterations: Vec::new(),
            entropy,
            iterations_run: 0,
        }
    }

    pub fn unique_crashes(&self) -> usize {
        self.crashes.len()
    }

    pub fn total_crashes(&self) -> u64 {
        self.crashes.values().map(|r| r.count).sum()
    }

    pub fn mean_si(&self) -> f64 {
        self.entropy.last().map_or(0.0, |r| r.mean_si)
    }
}

#[derive(Clone, Debug)]
pub struct CampaignRun {
    pub strategies: Strategies,
    pub seed: u64,
    pub series: Vec<MetricsRow>,
    pub state: CampaignState,
}

impl CampaignRun {
    pub fn final_row(&self) -> Option<&MetricsRow> {
        self.series.last()
    }
}

/// Per-iteration random stream: one ChaCha stream per iteration index, so
/// a sequence does not depend on how iterations are batched.
fn iteration_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    rng
}

struct Tables<'a> {
    act: &'a AugmentedChoiceTable,
    dtn: &'a Rpm,
    corpus_n: &'a Rpm,
}

fn generate_and_execute(
    setup: &CampaignSetup,
    tables: &Tables<'_>,
    start: &[SyscallId],
    iteration: usize,
) -> Result<(Vec<SyscallId>, ExecutionOutcome), CampaignError> {
    let mut rng = iteration_rng(setup.seed, iteration);
    let cfg = GenConfig::new(setup.seq_length, setup.seed, start.to_vec());
    let seq = if setup.strategies.random_walk {
        match gen_random_walk_traced(tables.act, tables.dtn, tables.corpus_n, &cfg, &mut rng) {
            Ok(walk) => walk.sequence,
            // Small kernels cannot always host `seq_length` acyclic edges;
            // the partial graph is still a usable sequence.
            Err(GenError::Stall { partial, .. }) => partial,
            Err(e) => return Err(e.into()),
        }
    } else {
        gen_unidirectional_with(tables.act, &cfg, &mut rng)?
    };
    let outcome = setup.kernel.execute(&seq)?;
    Ok((seq, outcome))
}

/// Runs a campaign to completion.
pub fn run_campaign_setup(setup: &CampaignSetup) -> Result<CampaignRun, CampaignError> {
    if setup.strategies.dongting && setup.dtn.is_none() {
        return Err(CampaignError::Config("strategy D requires a pretrained RPM".into()));
    }
    if setup.iterations == 0 || setup.sample_interval == 0 || setup.workers == 0 {
        return Err(CampaignError::Config("iterations, sample_interval and workers must be positive".into()));
    }
    let m = setup.kernel.len();
    let dtn = if setup.strategies.dongting { setup.dtn.clone() } else { None };
    if let Some(d) = &dtn {
        if d.size() != m {
            return Err(LearnError::DimensionMismatch(d.size(), m).into());
        }
    }
    let mut state = CampaignState::new(&setup.kernel, dtn);
    let start = setup.kernel.start_set();
    let mut series = Vec::new();
    let pool = (setup.workers > 1)
        .then(|| rayon::ThreadPoolBuilder::new().num_threads(setup.workers).build())
        .transpose()
        .map_err(|e| CampaignError::Config(format!("worker pool: {e}")))?;

    let mut next = 1usize;
    while next <= setup.iterations {
        let batch_end = (next + setup.workers - 1).min(setup.iterations);
        let act = Arc::clone(&state.act);
        let tables = Tables {
            act: &act,
            dtn: &state.dtn,
            corpus_n: &state.corpus_n,
        };
        let outcomes: Vec<_> = match &pool {
            None => vec![generate_and_execute(setup, &tables, &start, next)?],
            Some(pool) => pool.install(|| {
                (next..=batch_end)
                    .into_par_iter()
                    .map(|it| generate_and_execute(setup, &tables, &start, it))
                    .collect::<Result<Vec<_>, _>>()
            })?,
        };
        for (offset, (seq, outcome)) in outcomes.into_iter().enumerate() {
            let iteration = next + offset;
            absorb(setup, &mut state, iteration, &seq, &outcome)?;
            if iteration.is_multiple_of(setup.sample_interval) || iteration == setup.iterations {
                series.push(MetricsRow {
                    iteration,
                    cumulative_branches: state.coverage.len(),
                    cumulative_unique_crashes: state.unique_crashes(),
                    mean_si: state.mean_si(),
                    act_generation: state.act.generation(),
                });
            }
        }
        next = batch_end + 1;
    }
    state.iterations_run = setup.iterations;
    Ok(CampaignRun {
        strategies: setup.strategies,
        seed: setup.seed,
        series,
        state,
    })
}

fn absorb(
    setup: &CampaignSetup,
    state: &mut CampaignState,
    iteration: usize,
    seq: &[SyscallId],
    outcome: &ExecutionOutcome,
) -> Result<(), CampaignError> {
    let mut novel = 0usize;
    for b in &outcome.branches_hit {
        if state.coverage.insert(*b) {
            novel += 1;
        }
    }
    if let Some(label) = &outcome.crash {
        let rec = state.crashes.entry(label.clone()).or_insert(CrashRecord {
            count: 0,
            first_iteration: iteration,
        });
        if rec.count < setup.crash_cap {
            rec.count += 1;
        }
    }
    if novel > 0 {
        state
            .pending_feedback
            .extend(seq.windows(2).map(|w| (w[0], w[1])));
        if let Some(trace) = trace_of(outcome, seq).filter(|t| t.label == Label::Normal) {
            if state.seen_traces.insert(trace.calls.clone()) {
                state.minimized_corpus.push(trace);
                state.admitted_at.push(iteration);
                state.new_since_update += 1;
            }
        }
    }
    if should_update(state.minimized_corpus.len(), state.new_since_update, &setup.policy) {
        refresh_tables(setup, state)?;
        state.update_iterations.push(iteration);
    }
    Ok(())
}

fn refresh_tables(setup: &CampaignSetup, state: &mut CampaignState) -> Result<(), CampaignError> {
    for (from, to) in state.pending_feedback.drain(..) {
        state.ct.record_dynamic(from, to, 1.0);
    }
    let m = setup.kernel.len();
    if setup.strategies.corpus {
        let counts = bigram::learn_counts_from(m, &state.minimized_corpus);
        state.corpus_n = bigram::counts_to_rpm(&counts);
    }
    let zero = SquareMatrix::zeros(m);
    let dtn_t = if setup.strategies.dongting { transform_rpm(&state.dtn) } else { zero.clone() };
    let corpus_t = if setup.strategies.corpus { transform_rpm(&state.corpus_n) } else { zero };
    let act = update_act(&state.act, &state.ct, &dtn_t, &corpus_t)?;
    state.entropy.push(shannon_index(&act));
    state.act = Arc::new(act);
    state.new_since_update = 0;
    Ok(())
}

/// Loads everything a config names and runs it.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignRun, CampaignError> {
    run_campaign_setup(&CampaignSetup::from_config(cfg)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioResult {
    pub ratio: String,
    pub final_branches: usize,
    pub unique_crashes: usize,
    pub total_crashes: u64,
    pub final_mean_si: f64,
}

/// One `D`-only campaign per weight ratio, all sharing the config's seed.
pub fn run_ratio_study(
    cfg: &CampaignConfig,
    ratios: &[CombineWeights],
) -> Result<Vec<RatioResult>, CampaignError> {
    let paths = cfg
        .pretrained_rpm_paths
        .as_ref()
        .ok_or_else(|| CampaignError::Config("ratio study requires pretrained_rpm_paths".into()))?;
    let mut base = cfg.clone();
    base.strategies = Strategies {
        dongting: true,
        ..Strategies::NONE
    };
    base.validate()?;
    let kernel = base.load_kernel()?;
    ratios
        .iter()
        .map(|&w| {
            let mut setup = CampaignSetup::new(kernel.clone(), base.strategies, base.iterations, base.rng_seed);
            setup.seq_length = base.seq_length;
            setup.sample_interval = base.sample_interval;
            setup.crash_cap = base.crash_cap;
            setup.workers = base.workers;
            setup.dtn = Some(load_dtn(paths, w, &kernel)?);
            let run = run_campaign_setup(&setup)?;
            Ok(RatioResult {
                ratio: w.to_string(),
                final_branches: run.state.coverage.len(),
                unique_crashes: run.state.unique_crashes(),
                total_crashes: run.state.total_crashes(),
                final_mean_si: run.state.mean_si(),
            })
        })
        .collect()
}

pub fn ratio_study_csv(results: &[RatioResult]) -> String {
    let mut out = String::from("ratio,final_branches,unique_crashes,total_crashes,final_mean_si\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.ratio,
            r.final_branches,
            r.unique_crashes,
            r.total_crashes,
            fmt_f64(r.final_mean_si)
        ));
    }
    out
}

pub fn metrics_csv(series: &[MetricsRow]) -> String {
    let mut out = String::from("iteration,cumulative_branches,cumulative_unique_crashes,mean_si,act_generation\n");
    for r in series {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iteration,
            r.cumulative_branches,
            r.cumulative_unique_crashes,
            fmt_f64(r.mean_si),
            r.act_generation
        ));
    }
    out
}

pub fn entropy_csv(reports: &[EntropyReport]) -> String {
    let mut buf = Vec::new();
    EntropyReport::write_csv_header(&mut buf).expect("vec write");
    for r in reports {
        r.write_csv_rows(&mut buf).expect("vec write");
    }
    String::from_utf8(buf).expect("ascii csv")
}

pub fn crashes_csv(crashes: &BTreeMap<String, CrashRecord>) -> String {
    let mut rows: Vec<_> = crashes.iter().collect();
    rows.sort_by(|a, b| a.1.first_iteration.cmp(&b.1.first_iteration).then(a.0.cmp(b.0)));
    let mut out = String::from("label,count,first_iteration\n");
    for (label, rec) in rows {
        out.push_str(&format!("{label},{},{}\n", rec.count, rec.first_iteration));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub strategies: String,
    pub seed: u64,
    pub iterations: usize,
    pub cumulative_branches: usize,
    pub cumulative_unique_crashes: usize,
    pub total_crashes: u64,
    pub mean_si: f64,
    pub act_generation: u64,
    pub corpus_size: usize,
    pub updates: usize,
}

pub fn summary(run: &CampaignRun) -> Summary {
    let s = &run.state;
    Summary {
        strategies: run.strategies.to_string(),
        seed: run.seed,
        iterations: s.iterations_run,
        cumulative_branches: s.coverage.len(),
        cumulative_unique_crashes: s.unique_crashes(),
        total_crashes: s.total_crashes(),
        mean_si: s.mean_si(),
        act_generation: s.act.generation(),
        corpus_size: s.minimized_corpus.len(),
        updates: s.update_iterations.len(),
    }
}

pub const REPORT_FILES: [&str; 4] = ["metrics.csv", "entropy.csv", "crashes.csv", "summary.json"];

/// Writes `metrics.csv`, `entropy.csv`, `crashes.csv` and `summary.json`
/// into `dir`, creating it if needed.
pub fn export_report(run: &CampaignRun, dir: &Path) -> Result<Vec<PathBuf>, CampaignError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut summary_json = serde_json::to_vec_pretty(&summary(run)).expect("summary serializes");
    summary_json.write_all(b"\n").expect("vec write");
    let files = [
        (REPORT_FILES[0], metrics_csv(&run.series).into_bytes()),
        (REPORT_FILES[1], entropy_csv(&run.state.entropy).into_bytes()),
        (REPORT_FILES[2], crashes_csv(&run.state.crashes).into_bytes()),
        (REPORT_FILES[3], summary_json),
    ];
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        write_atomic(&path, &bytes).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::builtin;

    #[test]
    fn strategy_letters() {
        assert_eq!("CRD".parse::<Strategies>().unwrap(), Strategies::ALL);
        assert_eq!("dc".parse::<Strategies>().unwrap().to_string(), "CD");
        assert!("".parse::<Strategies>().unwrap().is_baseline());
        assert!("X".parse::<Strategies>().is_err());
        assert!("CC".parse::<Strategies>().is_err());
        assert_eq!(Strategies::NONE.to_string(), "baseline");
    }

    #[test]
    fn config_round_trip_and_validation() {
        let text = r#"{"spec_path":"builtin:tiny","strategies":"CR","iterations":10,"rng_seed":3,"weights":"1:2"}"#;
        let cfg: CampaignConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.strategies.to_string(), "CR");
        assert_eq!(cfg.weights, CombineWeights::new(1.0, 2.0).unwrap());
        assert_eq!(cfg.seq_length, 30);
        cfg.validate().unwrap();
        let mut d = cfg.clone();
        d.strategies = "D".parse().unwrap();
        assert!(matches!(d.validate(), Err(CampaignError::Config(_))));
        assert!(serde_json::from_str::<CampaignConfig>(r#"{"spec_path":"x","iterations":1,"bogus":1}"#).is_err());
    }

    #[test]
    fn baseline_keeps_static_table() {
        let setup = CampaignSetup::new(builtin("tiny"), Strategies::NONE, 300, 1);
        let run = run_campaign_setup(&setup).unwrap();
        assert_eq!(run.series.len(), 3);
        let st = run.state.ct.static_weights();
        let dy = run.state.ct.dynamic_weights();
        for i in 0..st.size() {
            for j in 0..st.size() {
                let expect = st.get(i, j) + dy.get(i, j);
                assert_eq!(run.state.act.weights().get(i, j), expect);
            }
        }
        assert!(run.state.corpus_n.is_zero());
    }

    #[test]
    fn first_update_after_small_batch() {
        let setup = CampaignSetup::new(builtin("medium"), "C".parse().unwrap(), 2000, 4);
        let run = run_campaign_setup(&setup).unwrap();
        let s = &run.state;
        let first = *s.update_iterations.first().expect("an update fired");
        // The update fires on the iteration that admitted the 33rd trace.
        assert_eq!(s.admitted_at[32], first);
        assert!(s.minimized_corpus.len() >= 33);
        assert!(!s.corpus_n.is_zero());
    }

    #[test]
    fn coverage_monotone_and_crash_cap() {
        let mut setup = CampaignSetup::new(builtin("tiny"), "R".parse().unwrap(), 1000, 9);
        setup.crash_cap = 3;
        setup.sample_interval = 50;
        let run = run_campaign_setup(&setup).unwrap();
        for w in run.series.windows(2) {
            assert!(w[0].cumulative_branches <= w[1].cumulative_branches);
            assert_eq!(w[1].iteration - w[0].iteration, 50);
        }
        assert!(run.state.crashes.values().all(|r| r.count <= 3));
    }

    #[test]
    fn workers_fold_in_order() {
        let mut setup = CampaignSetup::new(builtin("medium"), "CR".parse().unwrap(), 400, 2);
        setup.workers = 4;
        let a = run_campaign_setup(&setup).unwrap();
        let b = run_campaign_setup(&setup).unwrap();
        assert_eq!(a.series, b.series);
    }

    #[test]
    fn report_files() {
        let setup = CampaignSetup::new(builtin("tiny"), Strategies::NONE, 250, 5);
        let run = run_campaign_setup(&setup).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = export_report(&run, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        // 100, 200 and the final 250
        assert_eq!(metrics.lines().count(), 4);
        let summary: Summary =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        let last = run.final_row().unwrap();
        assert_eq!(summary.cumulative_branches, last.cumulative_branches);
        assert_eq!(summary.cumulative_unique_crashes, last.cumulative_unique_crashes);
        assert_eq!(summary.act_generation, last.act_generation);
    }

    #[test]
    fn empty_series_csv_is_header_only() {
        assert_eq!(metrics_csv(&[]).lines().count(), 1);
        assert_eq!(crashes_csv(&BTreeMap::new()).lines().count(), 1);
        assert_eq!(entropy_csv(&[]).lines().count(), 1);
    }
}
