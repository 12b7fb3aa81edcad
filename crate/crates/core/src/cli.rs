//! The `gesture` command-line tool.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::data::kinematics::parse_kinematic_line;
use crate::data::synth::write_jigsaws_corpus;
use crate::data::{
    load_dataset, read_feature_matrix, synthesize_corpus, FeatureKind, FeatureMatrix, LabeledTrial, SynthConfig,
};
use crate::error::{Error, Result};
use crate::experiment::checkpoint::load_checkpoint;
use crate::experiment::{
    label_map, load_prepared, prepare, run_louo, save_checkpoint, train_models, training_set, Checkpoint, NoHooks,
    PrepareOutcome, TrainConfig,
};
use crate::inference::{Engine, Precision};
use crate::metrics::{latency_stats, EvalReport, LatencyStats, REAL_TIME_BUDGET_MS};
use crate::seed::rng_for;

/// Environment variable holding the log filter (e.g. `info`, `debug`).
pub const LOG_ENV: &str = "GESTURE_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "gesture",
    version,
    about = "Real-time surgical gesture recognition and gesture/trajectory prediction",
    after_help = "Exit codes: 0 success, 1 usage or configuration error, 2 data error, 3 numeric failure.\nLog level: set GESTURE_LOG (error, warn, info, debug, trace)."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, fuse and cache a dataset described by a manifest.
    Prepare(PrepareArgs),
    /// Train both models and write a checkpoint.
    Train(TrainArgs),
    /// Leave-one-user-out evaluation; writes report.json and report.csv.
    Evaluate(EvaluateArgs),
    /// Stream 30-frame windows through a checkpoint, one JSON line per window.
    Infer(InferArgs),
    /// End-to-end latency benchmark on synthetic windows.
    Bench(BenchArgs),
    /// Write a synthetic corpus in the dataset layout.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        cfg.apply_overrides(&self.overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct DataSource {
    /// Dataset manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Cache written by `prepare`.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

impl DataSource {
    pub fn load(&self, cfg: &TrainConfig) -> Result<Vec<LabeledTrial>> {
        match (&self.manifest, &self.cache) {
            (Some(m), _) => load_dataset(m, &cfg.features),
            (None, Some(c)) => {
                let ds = load_prepared(c)?;
                if ds.selection != cfg.features {
                    return Err(Error::Config(format!(
                        "{} was prepared for features {} but the config selects {}",
                        c.display(),
                        ds.selection,
                        cfg.features
                    )));
                }
                Ok(ds.trials)
            }
            (None, None) => Err(Error::Config("either --manifest or --cache is required".into())),
        }
    }
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output cache file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataSource,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output checkpoint file.
    #[arg(long)]
    pub out: PathBuf,
    /// Leave this subject out of training.
    #[arg(long)]
    pub holdout: Option<String>,
    /// Also store the optimizer moments.
    #[arg(long)]
    pub with_optimizer: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataSource,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Only evaluate the fold holding out this subject.
    #[arg(long)]
    pub fold: Option<String>,
    /// Directory for report.json and report.csv.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Kinematics text stream; `-` reads standard input.
    #[arg(long, default_value = "-")]
    pub input: PathBuf,
    /// Sidecar feature file for an extra modality, e.g. `C=ctx.csv`; frames
    /// are aligned with the kinematics stream.
    #[arg(long = "feature", value_name = "KIND=PATH")]
    pub features: Vec<String>,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Trained checkpoint; without one, freshly initialised models of the
    /// configured shape are timed.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Input width when no checkpoint is given.
    #[arg(long, default_value_t = 14)]
    pub d_in: usize,
    /// Total timed runs, warmup included.
    #[arg(long, default_value_t = 200)]
    pub iterations: usize,
    /// Leading runs excluded from the statistics.
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub subjects: usize,
    #[arg(long, default_value_t = 4)]
    pub trials: usize,
    #[arg(long, default_value_t = 6)]
    pub classes: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 300)]
    pub min_frames: usize,
}

/// Machine-readable `bench` output.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub precision: Precision,
    pub d_in: usize,
    pub parameters: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub latency: LatencyStats,
    pub budget_ms: f64,
    pub pass: bool,
}

fn cmd_prepare(a: &PrepareArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = a.config.load()?;
    let outcome = prepare(&a.manifest, &cfg, &a.out)?;
    let status = match outcome {
        PrepareOutcome::Hit => "hit",
        PrepareOutcome::Written => "written",
    };
    let ds = load_prepared(&a.out)?;
    let line = serde_json::json!({
        "status": status,
        "cache": a.out,
        "input_hash": ds.input_hash,
        "features": ds.selection.to_string(),
        "trials": ds.trials.len(),
    });
    writeln!(out, "{line}").map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = a.config.load()?;
    let trials = a.data.load(&cfg)?;
    let labels = label_map(&trials, &cfg)?;
    let (stream, train) = training_set(&trials, a.holdout.as_deref())?;
    let models = train_models(&train, &labels, &cfg, stream, "train", &mut NoHooks)?;
    let ck = Checkpoint::from_models(&cfg, &models, a.with_optimizer);
    save_checkpoint(&a.out, &ck)?;
    let line = serde_json::json!({
        "checkpoint": a.out,
        "train_trials": train.len(),
        "recognizer_steps": models.recognizer_adam.steps_taken(),
        "predictor_steps": models.predictor_adam.steps_taken(),
    });
    writeln!(out, "{line}").map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.2}"))
}

fn summary(report: &EvalReport) -> String {
    let mut s = format!(
        "{:<8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>9}\n",
        "fold", "rec_acc", "edit", "f1@10", "pred_gt", "pred_rec", "lat_ms"
    );
    for f in report.folds.iter().chain(std::iter::once(&report.aggregate)) {
        s.push_str(&format!(
            "{:<8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>9}\n",
            f.fold,
            fmt_opt(f.recognition.map(|g| g.accuracy)),
            fmt_opt(f.recognition.map(|g| g.edit)),
            fmt_opt(f.recognition.map(|g| g.f1_10)),
            fmt_opt(f.prediction_gt.map(|g| g.accuracy)),
            fmt_opt(f.prediction_rec.map(|g| g.accuracy)),
            fmt_opt(f.latency.map(|l| l.mean_ms)),
        ));
    }
    s
}

fn cmd_evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = a.config.load()?;
    let trials = a.data.load(&cfg)?;
    let (report, _) = run_louo(&trials, &cfg, a.fold.as_deref(), &mut NoHooks)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let json_path = a.out.join("report.json");
    let csv_path = a.out.join("report.csv");
    std::fs::write(&json_path, report.to_json()?).map_err(|e| Error::io(&json_path, e))?;
    std::fs::write(&csv_path, report.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
    write!(out, "{}", summary(&report)).map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn parse_feature_arg(s: &str) -> Result<(FeatureKind, PathBuf)> {
    let (k, p) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--feature {s:?} is not KIND=PATH")))?;
    Ok((k.parse()?, PathBuf::from(p)))
}

/// Rows `start..start+len` of every sidecar.
fn slice_extras(extras: &[FeatureMatrix], start: usize, len: usize) -> Result<Vec<FeatureMatrix>> {
    extras
        .iter()
        .map(|m| {
            if start + len > m.frames() {
                return Err(Error::Alignment(format!(
                    "{} sidecar has {} frames, window needs frames {start}..{}",
                    m.kind,
                    m.frames(),
                    start + len
                )));
            }
            Ok(FeatureMatrix {
                kind: m.kind,
                values: m.values.row_range(start, len),
            })
        })
        .collect()
}

#[derive(Serialize)]
struct InferRecord<'a> {
    window: usize,
    start_frame: usize,
    recognized: Vec<String>,
    predicted: Vec<String>,
    trajectory: &'a [[f64; 6]],
    latency_ms: f64,
}

fn cmd_infer(a: &InferArgs, out: &mut dyn Write) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let engine = Engine::from_checkpoint(ck, a.precision);
    let mut extras = Vec::new();
    for f in &a.features {
        let (kind, path) = parse_feature_arg(f)?;
        extras.push(read_feature_matrix(&path, kind)?);
    }
    for kind in engine.config.features.extras() {
        if !extras.iter().any(|m| m.kind == kind) {
            return Err(Error::Config(format!(
                "checkpoint needs a --feature {kind}=PATH sidecar"
            )));
        }
    }
    let reader: Box<dyn BufRead> = if a.input.as_os_str() == "-" {
        Box::new(BufReader::new(std::io::stdin()))
    } else {
        let f = std::fs::File::open(&a.input).map_err(|e| Error::io(&a.input, e))?;
        Box::new(BufReader::new(f))
    };
    let w = engine.config.w_obs;
    let io_err = |e| Error::io(Path::new("<stdout>"), e);
    let mut frames = Vec::with_capacity(w);
    let mut bad: Option<String> = None;
    let mut frame_index = 0usize;
    let mut window = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(&a.input, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_kinematic_line(&line, &a.input, i + 1) {
            Ok(f) => frames.push(f),
            Err(e) => {
                bad.get_or_insert(e.to_string());
                frames.push(crate::data::KinematicFrame::zeros());
            }
        }
        frame_index += 1;
        if frames.len() < w {
            continue;
        }
        let start = frame_index - w;
        if let Some(msg) = bad.take() {
            log::warn!("skipping window {window} (frames {start}..{frame_index}): {msg}");
        } else {
            let result = slice_extras(&extras, start, w).and_then(|ex| engine.infer(&frames, &ex));
            match result {
                Ok(r) => {
                    let rec = InferRecord {
                        window,
                        start_frame: start,
                        recognized: r.recognized.iter().map(ToString::to_string).collect(),
                        predicted: r.predicted.iter().map(ToString::to_string).collect(),
                        trajectory: &r.trajectory,
                        latency_ms: r.latency_ms,
                    };
                    writeln!(out, "{}", serde_json::to_string(&rec)?).map_err(io_err)?;
                    out.flush().map_err(io_err)?;
                }
                Err(e @ Error::Numeric(_)) => return Err(e),
                Err(e) => log::warn!("skipping window {window} (frames {start}..{frame_index}): {e}"),
            }
        }
        frames.clear();
        window += 1;
    }
    if !frames.is_empty() {
        log::warn!("ignoring {} trailing frames that do not fill a window", frames.len());
    }
    Ok(())
}

/// Times `iterations` end-to-end runs on seeded random windows.
pub fn bench(engine: &Engine, iterations: usize, warmup: usize, seed: u64) -> Result<BenchReport> {
    if iterations <= warmup {
        return Err(Error::Config(format!(
            "iterations ({iterations}) must exceed warmup ({warmup})"
        )));
    }
    let (w, d) = (engine.config.w_obs, engine.d_in());
    let mut times = Vec::with_capacity(iterations);
    for i in 0..iterations {
        let mut rng = rng_for(seed, &[i as u64]);
        let data = (0..w * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let x = crate::nn::Tensor2::from_vec(w, d, data)?;
        let origin = [0.0; 6].map(|_: f64| rng.random_range(-100.0..100.0));
        let t0 = Instant::now();
        let out = engine.run(&x, &origin)?;
        times.push(t0.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(out);
    }
    let latency = latency_stats(&times, warmup)?;
    Ok(BenchReport {
        precision: engine.precision,
        d_in: d,
        parameters: engine.param_count(),
        iterations,
        warmup,
        pass: !latency.over_budget,
        latency,
        budget_ms: REAL_TIME_BUDGET_MS,
    })
}

fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let engine = match &a.checkpoint {
        Some(p) => Engine::from_checkpoint(load_checkpoint(p)?, a.precision),
        None => Engine::untrained(a.config.load()?, a.d_in, a.precision)?,
    };
    let report = bench(&engine, a.iterations, a.warmup, a.seed)?;
    writeln!(out, "{}", serde_json::to_string(&report)?).map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = SynthConfig {
        subjects: a.subjects,
        trials_per_subject: a.trials,
        classes: a.classes,
        noise: a.noise,
        min_frames: a.min_frames,
        ..SynthConfig::default()
    };
    let corpus = synthesize_corpus(&cfg, a.seed)?;
    let manifest = write_jigsaws_corpus(&a.out, &cfg, &corpus, a.seed)?;
    let line = serde_json::json!({ "manifest": manifest, "trials": corpus.len() });
    writeln!(out, "{line}").map_err(|e| Error::io(Path::new("<stdout>"), e))
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Prepare(a) => cmd_prepare(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Evaluate(a) => cmd_evaluate(a, out),
        Command::Infer(a) => cmd_infer(a, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Synth(a) => cmd_synth(a, out),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
