//! Command-line surface: `train`, `combine`, `entropy`, `generate`, `fuzz`,
//! `ratio-study` and `report`.
//!
//! Exit codes: 0 on success, 1 for user errors (bad flags, unreadable or
//! malformed input, invalid values), 2 for internal failures.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bigram::{self, combine_rpms, CombineWeights, LearnError, Rpm};
use crate::campaign::{
    export_report, ratio_study_csv, run_campaign, run_ratio_study, CampaignConfig, CampaignError, Summary,
};
use crate::choice_table::{matrix_entropy, shannon_index, AugmentedChoiceTable, ChoiceTableError};
use crate::generator::{gen_random_walk_traced, gen_unidirectional_with, rng_from_seed, GenConfig, GenError};
use crate::matrix_file::{write_atomic, MatrixFileError};
use crate::simkernel::{SimError, SimKernel};
use crate::trace::{self, to_pipe_line, CorpusManifest, Label, SyscallId, TraceError, TraceFormat, Vocabulary};

/// Environment variable that overrides `--seed` when set.
pub const SEED_ENV: &str = "SDRFUZZ_SEED";

#[derive(Debug, Parser)]
#[command(name = "sdrfuzz", version, about = "Bigram-guided syscall sequence generation and desk-scale fuzzing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn relation-probability matrices from a labeled trace corpus.
    Train(TrainArgs),
    /// Mix a normal and an abnormal matrix with a weight ratio.
    Combine(CombineArgs),
    /// Per-row Shannon index of a table or matrix, as CSV.
    Entropy(EntropyArgs),
    /// Generate syscall sequences from a choice table.
    Generate(GenerateArgs),
    /// Run a fuzzing campaign against a simulated kernel.
    Fuzz(FuzzArgs),
    /// Run one historic-model-only campaign per weight ratio.
    RatioStudy(RatioStudyArgs),
    /// Summarize a campaign report directory.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LabelArg {
    Normal,
    Abnormal,
    Both,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus manifest (JSON with "normal", "abnormal" and "format").
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub label: LabelArg,
    /// Output file; give it twice (normal, then abnormal) with `--label both`.
    #[arg(long, required = true)]
    pub out: Vec<PathBuf>,
    /// Variant vocabulary; abnormal pipe traces are then read as base names
    /// and spread over every variant.
    #[arg(long)]
    pub variants: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CombineArgs {
    #[arg(long)]
    pub normal: PathBuf,
    #[arg(long)]
    pub abnormal: PathBuf,
    /// Weights as `normal:abnormal`, both positive.
    #[arg(long, default_value = "1:1")]
    pub ratio: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct EntropySource {
    /// Choice-table file (augmented or static).
    #[arg(long)]
    pub act: Option<PathBuf>,
    /// Relation-probability matrix file.
    #[arg(long)]
    pub rpm: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    #[command(flatten)]
    pub source: EntropySource,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Uni,
    Walk,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Choice-table file; `--spec` derives the static table instead.
    #[arg(long, required_unless_present = "spec", conflicts_with = "spec")]
    pub act: Option<PathBuf>,
    /// Simulated kernel spec, or `builtin:<name>`.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub dtn: Option<PathBuf>,
    #[arg(long)]
    pub corpusn: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "uni")]
    pub mode: Mode,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 30)]
    pub length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated starting calls; defaults to every call, or to the
    /// resource-free calls with `--spec`.
    #[arg(long, value_delimiter = ',')]
    pub start: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FuzzArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's report directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RatioStudyArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1:1,1:2,2:1")]
    pub ratios: Vec<String>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory written by `fuzz`.
    #[arg(long)]
    pub dir: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::User(m) | CliError::Internal(m) => m,
        }
    }
}

fn user(msg: impl ToString) -> CliError {
    CliError::User(msg.to_string())
}

fn internal(msg: impl ToString) -> CliError {
    CliError::Internal(msg.to_string())
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        match &e {
            TraceError::Aggregate { errors, .. } => {
                let mut msg = e.to_string();
                for (line, err) in errors {
                    msg.push_str(&format!("\n  line {line}: {err}"));
                }
                user(msg)
            }
            _ => user(e),
        }
    }
}

impl From<MatrixFileError> for CliError {
    fn from(e: MatrixFileError) -> Self {
        user(e)
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        user(e)
    }
}

impl From<ChoiceTableError> for CliError {
    fn from(e: ChoiceTableError) -> Self {
        user(e)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        user(e)
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        match e {
            GenError::Cycle => internal(e),
            _ => user(e),
        }
    }
}

impl From<CampaignError> for CliError {
    fn from(e: CampaignError) -> Self {
        match e {
            CampaignError::Generate(g) => g.into(),
            e => user(e),
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{rendered}");
                    0
                }
                _ => {
                    let _ = write!(err, "{rendered}");
                    1
                }
            };
        }
    };
    let seed_env = std::env::var(SEED_ENV).ok();
    match execute(cli.command, seed_env.as_deref(), out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn env_seed(flag: Option<u64>, env: Option<&str>) -> Result<Option<u64>, CliError> {
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| user(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        None => Ok(flag),
    }
}

pub fn execute(cmd: Command, seed_env: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Train(a) => cmd_train(&a, err),
        Command::Combine(a) => cmd_combine(&a),
        Command::Entropy(a) => cmd_entropy(&a, out),
        Command::Generate(mut a) => {
            a.seed = env_seed(Some(a.seed), seed_env)?.unwrap_or(a.seed);
            cmd_generate(&a, out, err)
        }
        Command::Fuzz(mut a) => {
            a.seed = env_seed(a.seed, seed_env)?;
            cmd_fuzz(&a, out)
        }
        Command::RatioStudy(mut a) => {
            a.seed = env_seed(a.seed, seed_env)?;
            cmd_ratio_study(&a, out)
        }
        Command::Report(a) => cmd_report(&a, out),
    }
}

pub fn cmd_train(a: &TrainArgs, err: &mut dyn Write) -> Result<(), CliError> {
    let labels: Vec<Label> = match a.label {
        LabelArg::Normal => vec![Label::Normal],
        LabelArg::Abnormal => vec![Label::Abnormal],
        LabelArg::Both => vec![Label::Normal, Label::Abnormal],
    };
    if a.out.len() != labels.len() {
        return Err(user(format!(
            "--label {:?} needs {} --out path(s), got {}",
            a.label,
            labels.len(),
            a.out.len()
        )));
    }
    let manifest = CorpusManifest::load(&a.corpus)?;
    let base_vocab = match &a.variants {
        Some(p) => Vocabulary::load(p)?,
        None => Vocabulary::new(),
    };
    let name_only = a.variants.is_some() && manifest.format == TraceFormat::Pipe;

    // One shared vocabulary so the outputs can be combined directly.
    let resolved: Vec<Label> = labels
        .iter()
        .copied()
        .filter(|&l| !(name_only && l == Label::Abnormal))
        .collect();
    let corpus = manifest.load_corpus(base_vocab, &resolved)?;
    let vocab = corpus.vocabulary.clone();

    for (&label, path) in labels.iter().zip(&a.out) {
        let rpm = if name_only && label == Label::Abnormal {
            let mut seqs = Vec::new();
            for p in manifest.paths(Label::Abnormal) {
                seqs.extend(trace::load_pipe_tokens(p)?);
            }
            let bases: Vec<Vec<&str>> = seqs
                .iter()
                .map(|s| s.iter().map(|t| trace::base_name(t)).collect())
                .collect();
            let deltas = bigram::base_pair_deltas(bases.iter().map(Vec::as_slice));
            let counts = bigram::expand_abnormal_counts(&deltas, &vocab, &bigram::CountMatrix::zeros(vocab.len()))?;
            if seqs.is_empty() {
                let _ = writeln!(err, "warning: no abnormal traces; writing a zero matrix");
            }
            bigram::counts_to_rpm(&counts)
        } else {
            let subset = corpus.with_label(label);
            if subset.traces.is_empty() {
                let _ = writeln!(err, "warning: no {label:?} traces; writing a zero matrix");
            }
            bigram::learn_rpm(&subset)
        };
        bigram::save_rpm(&rpm, &vocab, path).map_err(internal)?;
    }
    Ok(())
}

pub fn cmd_combine(a: &CombineArgs) -> Result<(), CliError> {
    let weights = CombineWeights::parse(&a.ratio)?;
    let (normal, nv) = bigram::load_rpm(&a.normal)?;
    let (abnormal, av) = bigram::load_rpm(&a.abnormal)?;
    let abnormal = if av == nv { abnormal } else { abnormal.project(&av, &nv) };
    let mixed = combine_rpms(&normal, &abnormal, weights)?;
    bigram::save_rpm(&mixed, &nv, &a.out).map_err(internal)?;
    Ok(())
}

pub fn cmd_entropy(a: &EntropyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let report = match (&a.source.act, &a.source.rpm) {
        (Some(p), _) => shannon_index(&AugmentedChoiceTable::load(p)?.0),
        (_, Some(p)) => matrix_entropy(bigram::load_rpm(p)?.0.matrix()),
        _ => unreachable!("clap requires one source"),
    };
    let mut buf = Vec::new();
    crate::choice_table::EntropyReport::write_csv_header(&mut buf).map_err(internal)?;
    report.write_csv_rows(&mut buf).map_err(internal)?;
    out.write_all(&buf).map_err(internal)
}

fn load_kernel(spec: &Path) -> Result<SimKernel, CliError> {
    let s = spec.to_string_lossy();
    if let Some(name) = s.strip_prefix("builtin:") {
        let spec = crate::fixtures::builtin_spec(name).ok_or_else(|| user(format!("no builtin kernel {name:?}")))?;
        return Ok(SimKernel::new(spec)?);
    }
    Ok(SimKernel::load(spec)?)
}

fn load_aligned_rpm(path: Option<&PathBuf>, vocab: &Vocabulary) -> Result<Rpm, CliError> {
    match path {
        None => Ok(Rpm::zeros(vocab.len())),
        Some(p) => {
            let (rpm, v) = bigram::load_rpm(p)?;
            Ok(if &v == vocab { rpm } else { rpm.project(&v, vocab) })
        }
    }
}

pub fn cmd_generate(a: &GenerateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let (act, vocab, default_start) = match (&a.act, &a.spec) {
        (Some(p), _) => {
            let (act, vocab) = AugmentedChoiceTable::load(p)?;
            let all: Vec<SyscallId> = vocab.ids().collect();
            (act, vocab, all)
        }
        (None, Some(p)) => {
            let kernel = load_kernel(p)?;
            let act = crate::choice_table::init_act(&kernel.static_choice_table());
            (act, kernel.vocabulary().clone(), kernel.start_set())
        }
        (None, None) => return Err(user("one of --act or --spec is required")),
    };
    let dtn = load_aligned_rpm(a.dtn.as_ref(), &vocab)?;
    let corpus_n = load_aligned_rpm(a.corpusn.as_ref(), &vocab)?;
    let start = if a.start.is_empty() {
        default_start
    } else {
        a.start
            .iter()
            .map(|n| vocab.id(n).ok_or_else(|| user(format!("unknown start call {n:?}"))))
            .collect::<Result<_, _>>()?
    };
    let cfg = GenConfig::new(a.length, a.seed, start);
    let mut rng = rng_from_seed(a.seed);
    let mut text = String::new();
    for _ in 0..a.count {
        let seq = match a.mode {
            Mode::Uni => gen_unidirectional_with(&act, &cfg, &mut rng)?,
            Mode::Walk => match gen_random_walk_traced(&act, &dtn, &corpus_n, &cfg, &mut rng) {
                Ok(w) => w.sequence,
                Err(GenError::Stall { edges, partial, .. }) => {
                    let _ = writeln!(err, "warning: walk stalled at {edges} edges; emitting the partial sequence");
                    partial
                }
                Err(e) => return Err(e.into()),
            },
        };
        text.push_str(&to_pipe_line(&seq, &vocab));
        text.push('\n');
    }
    out.write_all(text.as_bytes()).map_err(internal)
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<CampaignConfig, CliError> {
    let mut cfg = CampaignConfig::load(path)?;
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    Ok(cfg)
}

pub fn cmd_fuzz(a: &FuzzArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = load_config(&a.config, a.seed)?;
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    let dir = a
        .out
        .clone()
        .or_else(|| cfg.report_dir.clone())
        .ok_or_else(|| user("no report directory: set report_dir in the config or pass --out"))?;
    let run = run_campaign(&cfg)?;
    export_report(&run, &dir).map_err(internal)?;
    let s = crate::campaign::summary(&run);
    writeln!(
        out,
        "{}: {} iterations, {} branches, {} unique crashes, mean SI {:.6}, report in {}",
        s.strategies,
        s.iterations,
        s.cumulative_branches,
        s.cumulative_unique_crashes,
        s.mean_si,
        dir.display()
    )
    .map_err(internal)
}

pub fn cmd_ratio_study(a: &RatioStudyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(&a.config, a.seed)?;
    let ratios = a
        .ratios
        .iter()
        .map(|r| CombineWeights::parse(r))
        .collect::<Result<Vec<_>, _>>()?;
    if ratios.is_empty() {
        return Err(user("no ratios given"));
    }
    let results = run_ratio_study(&cfg, &ratios)?;
    let csv = ratio_study_csv(&results);
    match &a.out {
        Some(p) => write_atomic(p, csv.as_bytes()).map_err(|e| internal(format!("{}: {e}", p.display()))),
        None => out.write_all(csv.as_bytes()).map_err(internal),
    }
}

fn read_report_file(dir: &Path, name: &str) -> Result<String, CliError> {
    let p = dir.join(name);
    fs::read_to_string(&p).map_err(|e| user(format!("{}: {e}", p.display())))
}

pub fn cmd_report(a: &ReportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let summary: Summary = serde_json::from_str(&read_report_file(&a.dir, "summary.json")?)
        .map_err(|e| user(format!("summary.json: {e}")))?;
    let metrics = read_report_file(&a.dir, "metrics.csv")?;
    let crashes = read_report_file(&a.dir, "crashes.csv")?;

    if let Some(last) = metrics.lines().skip(1).last() {
        let cols: Vec<&str> = last.split(',').collect();
        let consistent = cols.len() == 5
            && cols[1] == summary.cumulative_branches.to_string()
            && cols[2] == summary.cumulative_unique_crashes.to_string();
        if !consistent {
            return Err(user("metrics.csv final row disagrees with summary.json"));
        }
    }

    let mut text = String::new();
    text.push_str(&format!("strategies         {}\n", summary.strategies));
    text.push_str(&format!("seed               {}\n", summary.seed));
    text.push_str(&format!("iterations         {}\n", summary.iterations));
    text.push_str(&format!("branches           {}\n", summary.cumulative_branches));
    text.push_str(&format!("unique crashes     {}\n", summary.cumulative_unique_crashes));
    text.push_str(&format!("total crashes      {}\n", summary.total_crashes));
    text.push_str(&format!("mean SI            {:.6}\n", summary.mean_si));
    text.push_str(&format!("table generation   {}\n", summary.act_generation));
    text.push_str(&format!("corpus size        {}\n", summary.corpus_size));
    let rows: Vec<&str> = crashes.lines().skip(1).collect();
    if !rows.is_empty() {
        text.push_str("crashes (label, count, first iteration):\n");
        for r in rows {
            text.push_str(&format!("  {}\n", r.replace(',', "  ")));
        }
    }
    out.write_all(text.as_bytes()).map_err(internal)
}

/// Entry point for the binary.
pub fn main_with_env() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
