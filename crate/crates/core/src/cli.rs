//! Command-line driver. Every subcommand prints machine-readable JSON on
//! stdout (pretty-printed with `--human`). Exit codes: 0 success, 1 usage
//! error, 2 data error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{
    self, detect_mislabeled, evaluate, influence_ranking, inject_label_noise, loss_baseline_curve,
    CollapseMap, MislabelMode, DEFAULT_REMOVAL_PERCENTS,
};
use crate::classifier::{predict_store, BackoffConfig, Prediction};
use crate::error::Error;
use crate::index::{read_index, write_index, KnnIndex};
use crate::normalize::{compute_stats, NormStats, DEFAULT_EPSILON};
use crate::store::{build_slice, read_sidecar, read_store, write_store, SliceMask, SliceRule};
use crate::synth::{gen_synthetic, SyntheticSpec};
use crate::tuning::{tune, TuneGrid, TuneReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "knn-lens",
    version,
    about = "kNN backoff, tuning and audits over cached classifier embeddings"
)]
pub struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "KNN_THREADS", default_value_t = 0)]
    pub threads: usize,
    /// Pretty-print JSON output.
    #[arg(long, global = true)]
    pub human: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate normalization statistics from a training store.
    Stats(StatsArgs),
    /// Normalize a training store and write an index snapshot.
    BuildIndex(BuildIndexArgs),
    /// Backoff predictions for every example of a store (JSON lines).
    Predict(PredictArgs),
    /// Grid-search k, T and tau on a validation store.
    Tune(TuneArgs),
    /// Flag potentially mislabeled training examples.
    Mislabel(MislabelArgs),
    /// Rank training examples by how often they are retrieved.
    Influence(InfluenceArgs),
    /// Accuracy of a prediction file, overall and per slice.
    Eval(EvalArgs),
    /// Write seeded synthetic train/val/test stores.
    GenSynthetic(GenSyntheticArgs),
}

#[derive(Debug, Args)]
pub struct StatsOpts {
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Estimate from this many randomly chosen rows instead of all of them.
    #[arg(long)]
    pub subset: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub store: PathBuf,
    #[command(flatten)]
    pub opts: StatsOpts,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildIndexArgs {
    pub train: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Reuse statistics written by `stats` instead of estimating them.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[command(flatten)]
    pub opts: StatsOpts,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub eval: PathBuf,
    /// Tune report whose best config supplies defaults for k, T and tau.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Write the JSON lines here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub k_candidates: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub t_candidates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub tau_grid: Option<Vec<f64>>,
    /// Permit k at or above 1% of the training size.
    #[arg(long)]
    pub allow_large_k: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MislabelArgs {
    /// Prebuilt index (not allowed with --inject-fraction).
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Training store; indexed on the fly and required for noise injection.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Probe store (defaults to the training store in self-query mode).
    #[arg(long)]
    pub probe: Option<PathBuf>,
    #[arg(long, default_value = "probe-set")]
    pub mode: MislabelMode,
    /// Flip this fraction of training labels first and score against them.
    #[arg(long)]
    pub inject_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Loss-baseline fractions reported alongside injected-noise scores.
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.2, 0.3, 0.5, 0.65, 0.8, 1.0])]
    pub curve_fractions: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InfluenceArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Probe store; the training store itself unless --include-self is given.
    #[arg(long)]
    pub probe: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub k: usize,
    #[arg(long = "percent", value_delimiter = ',', default_values_t = DEFAULT_REMOVAL_PERCENTS)]
    pub percents: Vec<f64>,
    /// Keep self-retrieval when the probe is the training store itself.
    #[arg(long)]
    pub include_self: bool,
    /// Directory for removal-list text files (one index per line).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON lines written by `predict`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Store holding the gold labels (its sidecar feeds slice rules).
    #[arg(long)]
    pub gold: PathBuf,
    /// JSON object mapping slice names to a rule string or a boolean array.
    #[arg(long)]
    pub slices: Option<PathBuf>,
    /// Label collapse such as "1:1,2:1"; unlisted labels map to themselves.
    #[arg(long)]
    pub collapse: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1500)]
    pub n_train: usize,
    /// Defaults to --n-train.
    #[arg(long)]
    pub n_val: Option<usize>,
    /// Defaults to --n-train.
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 3)]
    pub num_labels: u32,
    #[arg(long, default_value_t = 10.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0.2)]
    pub model_noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            if e.kind() == clap::error::ErrorKind::InvalidSubcommand {
                let _ = Cli::command().write_long_help(&mut io::stderr());
            }
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_DATA;
        }
    };
    let mut buffer = Vec::new();
    let result = pool.install(|| run(&cli, &mut buffer));
    if let Err(e) = io::stdout().lock().write_all(&buffer) {
        eprintln!("error: cannot write output: {e}");
        return EXIT_DATA;
    }
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn run(cli: &Cli, out: &mut dyn Write) -> CmdResult<()> {
    let human = cli.human;
    match &cli.command {
        Command::Stats(a) => {
            let store = read_store(&a.store)?;
            let stats = compute_stats(&store, a.opts.subset, a.opts.seed, a.opts.epsilon)?;
            if let Some(path) = &a.out {
                write_json(path, &stats)?;
            }
            emit(out, &stats, human)
        }
        Command::BuildIndex(a) => {
            let store = read_store(&a.train)?;
            let stats = match &a.stats {
                Some(path) => read_json::<NormStats>(path)?,
                None => compute_stats(&store, a.opts.subset, a.opts.seed, a.opts.epsilon)?,
            };
            let index = KnnIndex::build(&store, &stats)?;
            write_index(&index, &a.out)?;
            emit(
                out,
                &json!({
                    "index": a.out,
                    "n": index.len(),
                    "d": index.dim(),
                    "num_labels": index.num_labels(),
                    "epsilon": stats.epsilon,
                    "source_count": stats.source_count,
                    "seed": a.opts.seed,
                }),
                human,
            )
        }
        Command::Predict(a) => predict(a, out, human),
        Command::Tune(a) => {
            let index = read_index(&a.index)?;
            let val = read_store(&a.val)?;
            let defaults = TuneGrid::defaults_for(index.len());
            let grid = TuneGrid {
                k_candidates: a.k_candidates.clone().unwrap_or(defaults.k_candidates),
                temperatures: a.t_candidates.clone().unwrap_or(defaults.temperatures),
                taus: a.tau_grid.clone().unwrap_or(defaults.taus),
            };
            let report = tune(&index, &val, &grid, a.allow_large_k)?;
            if let Some(path) = &a.out {
                write_json(path, &report)?;
            }
            emit(out, &report, human)
        }
        Command::Mislabel(a) => mislabel(a, out, human),
        Command::Influence(a) => {
            let index = read_index(&a.index)?;
            let probe = read_store(&a.probe)?;
            // Self-exclusion only makes sense when the probe set is the indexed training store.
            let exclude_self = !a.include_self && analysis::is_indexed_store(&index, &probe)?;
            let report = influence_ranking(&index, &probe, a.k, exclude_self, &a.percents)?;
            if let Some(dir) = &a.out_dir {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                for list in &report.removal_lists {
                    let path = dir.join(format!("removal_top{}pct.txt", list.percent));
                    let body: String = list.indices.iter().map(|i| format!("{i}\n")).collect();
                    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
                }
            }
            if let Some(path) = &a.out {
                write_json(path, &report)?;
            }
            emit(out, &report, human)
        }
        Command::Eval(a) => eval(a, out, human),
        Command::GenSynthetic(a) => {
            let spec = SyntheticSpec {
                n_train: a.n_train,
                n_val: a.n_val.unwrap_or(a.n_train),
                n_test: a.n_test.unwrap_or(a.n_train),
                dim: a.dim,
                num_labels: a.num_labels,
                cluster_separation: a.separation,
                model_noise: a.model_noise,
                seed: a.seed,
            };
            let splits = gen_synthetic(&spec)?;
            fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
            let mut files = BTreeMap::new();
            for (name, store) in [
                ("train", &splits.train),
                ("val", &splits.val),
                ("test", &splits.test),
            ] {
                let path = a.out_dir.join(format!("{name}.knnc"));
                write_store(store, &path)?;
                files.insert(name, path);
            }
            emit(out, &json!({ "spec": spec, "files": files }), human)
        }
    }
}

#[derive(Debug, Serialize)]
struct PredictSummary {
    count: usize,
    accuracy: f64,
    model_accuracy: f64,
    used_knn: usize,
    config: BackoffConfig,
}

fn predict(a: &PredictArgs, out: &mut dyn Write, human: bool) -> CmdResult<()> {
    let from_file = a
        .config
        .as_ref()
        .map(|p| read_json::<TuneReport>(p).map(|r| r.best))
        .transpose()?;
    let pick = |flag: Option<_>, field: fn(&BackoffConfig) -> _, name: &str| {
        flag.or(from_file.as_ref().map(field))
            .ok_or_else(|| Failure::Usage(format!("--{name} is required without --config")))
    };
    let config = BackoffConfig::new(
        pick(a.k.map(|k| k as f64), |c| c.k as f64, "k")? as usize,
        pick(a.temperature, |c| c.temperature, "temperature")?,
        pick(a.tau, |c| c.tau, "tau")?,
    )?;

    let index = read_index(&a.index)?;
    let eval = read_store(&a.eval)?;
    let predictions = predict_store(&index, &eval, &config)?;

    let gold = eval.labels();
    let count = predictions.len();
    let correct = predictions
        .iter()
        .filter(|p| p.label == gold[p.index])
        .count();
    let model_correct = predictions
        .iter()
        .filter(|p| p.model_argmax == gold[p.index])
        .count();
    let ratio = |c: usize| {
        if count == 0 {
            0.0
        } else {
            c as f64 / count as f64
        }
    };
    let summary = PredictSummary {
        count,
        accuracy: ratio(correct),
        model_accuracy: ratio(model_correct),
        used_knn: predictions.iter().filter(|p| p.used_knn).count(),
        config,
    };

    let mut body = Vec::new();
    for p in &predictions {
        writeln!(body, "{}", serde_json::to_string(p).map_err(Error::from)?).unwrap();
    }
    writeln!(body, "{}", json!({ "summary": summary })).unwrap();
    match &a.out {
        Some(path) => {
            fs::write(path, &body).map_err(|e| Error::io(path, e))?;
            emit(out, &json!({ "summary": summary }), human)
        }
        None => out
            .write_all(&body)
            .map_err(|e| Failure::Data(Error::io("<stdout>", e))),
    }
}

#[derive(Debug, Serialize)]
struct MislabelOutput {
    #[serde(flatten)]
    report: analysis::MislabelReport,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    inject_fraction: Option<f64>,
    n_train: usize,
    candidate_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    loss_curve: Option<Vec<analysis::CurvePoint>>,
    /// Smallest loss-ranked fraction matching the candidates' recall.
    #[serde(skip_serializing_if = "Option::is_none")]
    loss_fraction_to_match: Option<f64>,
}

fn mislabel(a: &MislabelArgs, out: &mut dyn Write, human: bool) -> CmdResult<()> {
    let (index, train, mask) = match (&a.index, &a.train, a.inject_fraction) {
        (Some(_), _, Some(_)) => {
            return Err(Failure::Usage(
                "--inject-fraction needs --train, not --index".into(),
            ))
        }
        (None, None, _) => {
            return Err(Failure::Usage(
                "one of --index or --train is required".into(),
            ))
        }
        (Some(path), train, None) => (
            read_index(path)?,
            train.as_ref().map(read_store).transpose()?,
            None,
        ),
        (None, Some(path), fraction) => {
            let clean = read_store(path)?;
            let (train, mask) = match fraction {
                Some(f) => {
                    let (noisy, mask) = inject_label_noise(&clean, f, a.seed)?;
                    (noisy, Some(mask))
                }
                None => (clean, None),
            };
            let stats = compute_stats(&train, None, a.seed, a.epsilon)?;
            (KnnIndex::build(&train, &stats)?, Some(train), mask)
        }
    };
    let probe = match (&a.probe, a.mode) {
        (Some(path), _) => read_store(path)?,
        (None, MislabelMode::SelfQuery) => train
            .clone()
            .ok_or_else(|| Failure::Usage("self-query mode needs --train or --probe".into()))?,
        (None, MislabelMode::ProbeSet) => {
            return Err(Failure::Usage("probe-set mode needs --probe".into()))
        }
    };
    let report = detect_mislabeled(&index, &probe, a.mode, mask.as_deref())?;

    let mut loss_curve = None;
    let mut loss_fraction_to_match = None;
    if let (Some(mask), Some(train), Some(scores)) = (&mask, &train, &report.scores) {
        if train.has_model_probs() {
            let losses = analysis::stored_label_losses(train)?;
            loss_curve = Some(loss_baseline_curve(&losses, mask, &a.curve_fractions)?);
            loss_fraction_to_match = analysis::fraction_to_reach(&losses, mask, scores.recall)?;
        }
    }
    let n_train = index.len();
    let output = MislabelOutput {
        candidate_fraction: report.candidates.len() as f64 / n_train as f64,
        report,
        seed: a.seed,
        inject_fraction: a.inject_fraction,
        n_train,
        loss_curve,
        loss_fraction_to_match,
    };
    if let Some(path) = &a.out {
        write_json(path, &output)?;
    }
    emit(out, &output, human)
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SliceSpec {
    Rule(String),
    Mask(Vec<bool>),
}

fn eval(a: &EvalArgs, out: &mut dyn Write, human: bool) -> CmdResult<()> {
    let gold_store = read_store(&a.gold)?;
    let gold = gold_store.labels();
    let predictions = read_predictions(&a.predictions, gold.len())?;

    let mut slices = Vec::new();
    if let Some(path) = &a.slices {
        let specs: BTreeMap<String, SliceSpec> = read_json(path)?;
        let sidecar = read_sidecar(&a.gold)?;
        for (name, spec) in specs {
            let mask = match spec {
                SliceSpec::Rule(rule) => {
                    build_slice(&gold_store, &SliceRule::parse(&rule)?, sidecar.as_ref())?
                }
                SliceSpec::Mask(member) => SliceMask { member },
            };
            slices.push((name, mask));
        }
    }
    let collapse = a
        .collapse
        .as_deref()
        .map(|s| CollapseMap::parse(s, gold_store.num_labels() as usize))
        .transpose()?;
    let report = evaluate(&predictions, gold, &slices, collapse.as_ref())?;
    if let Some(path) = &a.out {
        write_json(path, &report)?;
    }
    emit(out, &report, human)
}

/// Labels from `predict` output, ordered by example index.
fn read_predictions(path: &Path, expected: usize) -> CmdResult<Vec<u32>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels: Vec<Option<u32>> = vec![None; expected];
    let mut seen = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let value: Value = serde_json::from_str(line).map_err(Error::from)?;
        if value.get("summary").is_some() {
            continue;
        }
        let p: Prediction = serde_json::from_value(value).map_err(Error::from)?;
        seen += 1;
        match labels.get_mut(p.index) {
            Some(slot) => *slot = Some(p.label),
            None => {
                return Err(Error::LengthMismatch {
                    left: p.index + 1,
                    right: expected,
                }
                .into())
            }
        }
    }
    let filled: Option<Vec<u32>> = labels.into_iter().collect();
    filled.ok_or_else(|| {
        Error::LengthMismatch {
            left: seen,
            right: expected,
        }
        .into()
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> crate::error::Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> crate::error::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T, human: bool) -> CmdResult<()> {
    let text = if human {
        serde_json::to_string_pretty(value)
    } else {
        serde_json::to_string(value)
    }
    .map_err(Error::from)?;
    writeln!(out, "{text}").map_err(|e| Failure::Data(Error::io("<stdout>", e)))
}
