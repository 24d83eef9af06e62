//! `cap2aug` command line.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 failed
//! gradient check. Settings resolve as flags > `--config` file > defaults,
//! and the resolved [`RunConfig`] is echoed to `run_config.json` in the
//! output directory so it can be fed back through `--config`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::cache_adapter::CacheAdapter;
use crate::error::Error;
use crate::evaluator::{
    alpha_ablation, evaluate, evaluate_with_groups, shot_sweep, synth_count_ablation, SweepOptions,
};
use crate::feature_store::{l2_normalize, sample_episode, synth_cluster_dataset, Dataset, SynthParams};
use crate::trainer::{grad_check, train_episode, GradCheckInstance, TrainConfig};

pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const EVAL_FILE: &str = "eval.json";
pub const TABLE_CSV_FILE: &str = "table.csv";
pub const TABLE_TEXT_FILE: &str = "table.txt";
pub const THREADS_ENV: &str = "CAP2AUG_THREADS";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Check(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Check(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Fully resolved settings of one invocation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub shots: Vec<usize>,
    pub n_way: Option<usize>,
    /// Seeds `seed, seed + 1, ..` run per sweep cell.
    pub repeats: Option<usize>,
    pub grid: Vec<f64>,
    pub train: TrainConfig,
}

#[derive(Parser, Debug)]
#[command(
    name = "cap2aug",
    version,
    about = "Cache-adapter training with MMD feature alignment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train on one episode, evaluate on the test split, write artifacts.
    Train(RunFlags),
    /// Evaluate a saved checkpoint on a manifest's test split.
    Evaluate(EvaluateFlags),
    /// Run an ablation sweep and write CSV and text tables.
    Ablate {
        #[arg(value_enum)]
        kind: AblationKind,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Write the Gaussian cluster oracle dataset.
    SynthData(SynthFlags),
    /// Finite-difference check of the training gradient.
    Gradcheck(GradFlags),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AblationKind {
    Alpha,
    SynthCount,
    Shots,
}

#[derive(Args, Debug, Clone)]
struct RunFlags {
    /// JSON RunConfig; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    shots: Option<Vec<usize>>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long = "residual-ratio", allow_negative_numbers = true)]
    residual_ratio: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    lr: Option<f64>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long = "n-way")]
    n_way: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    grid: Option<Vec<f64>>,
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct EvaluateFlags {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory holding keys.capf and adapter.json.
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args, Debug)]
struct SynthFlags {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Norm of the synthetic domain shift.
    #[arg(long, default_value_t = 0.8, allow_negative_numbers = true)]
    shift: f64,
    #[arg(long = "n-way", default_value_t = 10)]
    n_way: usize,
    /// Real training rows per class.
    #[arg(long, default_value_t = 16)]
    shots: usize,
    #[arg(long = "k-synth", default_value_t = 16)]
    k_synth: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long = "test-per-class", default_value_t = 50)]
    test_per_class: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct GradFlags {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5.5)]
    beta: f64,
    #[arg(long = "residual-ratio", default_value_t = 1.0)]
    residual_ratio: f64,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
                    log::warn!("thread pool already initialised; ignoring {THREADS_ENV}");
                }
            }
            _ => log::warn!("ignoring invalid {THREADS_ENV}={v}"),
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Train(flags) => cmd_train(&flags),
        Command::Evaluate(flags) => cmd_evaluate(&flags),
        Command::Ablate { kind, flags } => cmd_ablate(kind, &flags),
        Command::SynthData(flags) => cmd_synth_data(&flags),
        Command::Gradcheck(flags) => cmd_gradcheck(&flags),
    }
}

fn resolve(flags: &RunFlags) -> CliResult<RunConfig> {
    let mut rc = match &flags.config {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    let t = &mut rc.train;
    macro_rules! set {
        ($flag:expr => $dst:expr) => {
            if let Some(v) = $flag.clone() {
                $dst = v;
            }
        };
    }
    set!(flags.seed => t.seed);
    set!(flags.alpha => t.alpha);
    set!(flags.beta => t.beta);
    set!(flags.residual_ratio => t.a);
    set!(flags.epochs => t.epochs);
    set!(flags.lr => t.lr0);
    set!(flags.batch_size => t.batch_size);
    set!(flags.shots => rc.shots);
    set!(flags.grid => rc.grid);
    if flags.manifest.is_some() {
        rc.manifest = flags.manifest.clone();
    }
    if flags.out.is_some() {
        rc.out = flags.out.clone();
    }
    if flags.n_way.is_some() {
        rc.n_way = flags.n_way;
    }
    if flags.repeats.is_some() {
        rc.repeats = flags.repeats;
    }
    rc.train.validate()?;
    if rc.repeats == Some(0) {
        return Err(CliError::Config("--repeats must be >= 1".into()));
    }
    Ok(rc)
}

fn require<'a>(v: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a PathBuf> {
    v.as_ref()
        .ok_or_else(|| CliError::Config(format!("--{flag} is required")))
}

/// Creates `out`, refusing to reuse a non-empty directory without `force`.
fn prepare_out(out: &Path, force: bool) -> CliResult<()> {
    if out.exists() {
        let non_empty = fs::read_dir(out)
            .map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(CliError::Config(format!(
                "output directory {} is not empty; pass --force to overwrite",
                out.display()
            )));
        }
    }
    fs::create_dir_all(out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn load_dataset(rc: &RunConfig) -> CliResult<Dataset> {
    let path = require(&rc.manifest, "manifest")?;
    Ok(Dataset::load(path)?)
}

fn cmd_train(flags: &RunFlags) -> CliResult<()> {
    let mut rc = resolve(flags)?;
    if rc.shots.is_empty() {
        rc.shots = vec![16];
    }
    if rc.shots.len() != 1 {
        return Err(CliError::Config("train takes a single --shots value".into()));
    }
    let out = require(&rc.out, "out")?.clone();
    let data = load_dataset(&rc)?;
    prepare_out(&out, flags.force)?;

    let n_way = rc.n_way.unwrap_or(data.num_classes());
    let episode = sample_episode(&data, n_way, rc.shots[0], rc.train.seed)?;
    log::info!(
        "training {}-way {}-shot: {} real + {} synthetic support rows, alpha {}",
        n_way,
        rc.shots[0],
        episode.support_real.rows(),
        episode.support_synthetic.rows(),
        rc.train.alpha
    );
    let run = train_episode(&episode, &rc.train)?;
    let counts = data.shots_available();
    let class_counts: Vec<usize> = episode.class_ids.iter().map(|&c| counts[c]).collect();
    let report = evaluate_with_groups(&run.adapter, &episode.query, &class_counts)?;
    log::info!("test accuracy {:.2}% in {:.2?}", report.overall_acc, run.wall_time);

    write_json(&out.join(RUN_CONFIG_FILE), &rc)?;
    run.write_history(out.join(HISTORY_FILE))?;
    run.adapter.save_checkpoint(&out, &data.manifest_hash)?;
    write_json(&out.join(EVAL_FILE), &report)?;
    println!("accuracy {:.2}", report.overall_acc);
    Ok(())
}

fn cmd_evaluate(flags: &EvaluateFlags) -> CliResult<()> {
    let data = Dataset::load(&flags.manifest)?;
    let text = l2_normalize(&data.text_weights)?;
    let (adapter, meta) = CacheAdapter::load_checkpoint(&flags.checkpoint, &text)?;
    if meta.manifest_hash != data.manifest_hash {
        log::warn!("checkpoint was trained against a different manifest");
    }
    let test = l2_normalize(&data.test)?;
    let report = evaluate(&adapter, &test)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Data(e.to_string()))?;
    println!("{json}");
    Ok(())
}

fn integer_grid(grid: &[f64]) -> CliResult<Vec<usize>> {
    grid.iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
                Ok(v as usize)
            } else {
                Err(CliError::Config(format!(
                    "grid value {v} is not a non-negative integer"
                )))
            }
        })
        .collect()
}

fn cmd_ablate(kind: AblationKind, flags: &RunFlags) -> CliResult<()> {
    let mut rc = resolve(flags)?;
    if flags.grid.as_ref().is_some_and(|g| g.is_empty()) {
        return Err(CliError::Config("empty --grid".into()));
    }
    if rc.grid.is_empty() {
        rc.grid = match kind {
            AblationKind::Alpha => vec![0.0, 0.01, 0.1, 1.0],
            AblationKind::SynthCount => vec![4.0, 16.0, 40.0, 80.0],
            AblationKind::Shots => vec![2.0, 4.0, 8.0, 16.0],
        };
    }
    if rc.shots.is_empty() {
        rc.shots = match kind {
            AblationKind::Alpha => vec![2, 4, 8, 16],
            _ => vec![16],
        };
    }
    let out = require(&rc.out, "out")?.clone();
    let data = load_dataset(&rc)?;
    prepare_out(&out, flags.force)?;

    let repeats = rc.repeats.unwrap_or(1) as u64;
    let opts = SweepOptions {
        n_way: rc.n_way,
        seeds: (0..repeats).map(|i| rc.train.seed + i).collect(),
    };
    let table = match kind {
        AblationKind::Alpha => alpha_ablation(&data, &rc.grid, &rc.shots, &rc.train, &opts)?,
        AblationKind::SynthCount => {
            let counts = integer_grid(&rc.grid)?;
            synth_count_ablation(&data, &counts, &rc.shots, &rc.train, &opts)?
        }
        AblationKind::Shots => {
            let shots = integer_grid(&rc.grid)?;
            shot_sweep(&data, &shots, &rc.train, &opts)?
        }
    };
    write_json(&out.join(RUN_CONFIG_FILE), &rc)?;
    write_text(&out.join(TABLE_CSV_FILE), &table.to_csv())?;
    let text = table.to_text();
    write_text(&out.join(TABLE_TEXT_FILE), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_synth_data(flags: &SynthFlags) -> CliResult<()> {
    if !(flags.shift >= 0.0 && flags.shift.is_finite()) {
        return Err(CliError::Config(format!("--shift must be >= 0, got {}", flags.shift)));
    }
    let params = SynthParams::new(flags.n_way, flags.shots, flags.k_synth, flags.dim, flags.seed)
        .with_noise(flags.noise)
        .with_test_per_class(flags.test_per_class)
        .with_shift_norm(flags.shift);
    let data = synth_cluster_dataset(&params)?;
    prepare_out(&flags.out, flags.force)?;
    let manifest = data.write(&flags.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn cmd_gradcheck(flags: &GradFlags) -> CliResult<()> {
    if !(flags.alpha >= 0.0 && flags.alpha.is_finite()) {
        return Err(CliError::Config(format!("--alpha must be >= 0, got {}", flags.alpha)));
    }
    if flags.tolerance.is_nan() || flags.tolerance <= 0.0 {
        return Err(CliError::Config(format!(
            "--tolerance must be positive, got {}",
            flags.tolerance
        )));
    }
    let instance = GradCheckInstance {
        alpha: flags.alpha,
        seed: flags.seed,
        beta: flags.beta,
        a: flags.residual_ratio,
        ..Default::default()
    };
    let report = grad_check(&instance, flags.tolerance)?;
    println!(
        "max relative error {:e} over {} coordinates (tolerance {:e}); MMD path {}",
        report.max_rel_err,
        report.coordinates,
        report.tolerance,
        if report.mmd_exercised { "checked" } else { "skipped" }
    );
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "gradient check failed at key {} coordinate {}: analytic {:e}, numeric {:e}, relative error {:e}",
            report.worst.0, report.worst.1, report.analytic_at_worst, report.numeric_at_worst, report.max_rel_err
        )))
    }
}
