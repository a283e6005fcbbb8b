mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use config::FileConfig;
use traj_core::geojson::{export_geojson, Role, Track};
use traj_core::h3codec::point_to_pseudo_octal;
use traj_core::kalman::KalmanConfig;
use traj_core::pipeline::{self, clean, CleanTrajectory, CleaningConfig, Format};
use traj_core::predictor::{EnsembleConfig, NGramConfig, NGramModel, Unit, AGREEMENT_RADIUS_M, DEFAULT_ENSEMBLE};
use traj_core::report::{self, PredictionRecord};
use traj_core::synth;
use traj_core::tokenizer::{corpus, encode_trajectory};
use traj_core::Error;

const STEP_S: i64 = 60;

#[derive(Parser)]
#[command(name = "trajtok", version, about = "AIS trajectory cleaning, tokenization, prediction and evaluation")]
struct Cli {
    /// key=value file supplying defaults for numeric flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Raw AIS reports (CSV or NDJSON) to cleaned one-minute trajectories
    Clean(CleanArgs),
    /// Trajectories to an HTK1 token corpus
    Tokenize(TokenizeArgs),
    /// Fit an n-gram model on a token corpus
    Train(TrainArgs),
    /// Ensemble predictions from the n-gram model
    Predict(PredictArgs),
    /// Constant-velocity Kalman baseline predictions
    Kalman(KalmanArgs),
    /// Score predictions against the trajectories they continue
    Eval(EvalArgs),
    /// Generate a synthetic AIS corpus with a ground-truth manifest
    Synth(SynthArgs),
    /// Trajectories, optionally with predictions, as GeoJSON
    ExportGeojson(ExportArgs),
}

#[derive(Args)]
struct Io {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CleanArgs {
    #[command(flatten)]
    io: Io,
    /// Coarse DBSCAN radius, degrees
    #[arg(long)]
    eps_global: Option<f64>,
    /// Fine DBSCAN radius, degrees
    #[arg(long)]
    eps_local: Option<f64>,
}

#[derive(Args)]
struct TokenizeArgs {
    #[command(flatten)]
    io: Io,
    /// Write space-separated ids instead of HTK1
    #[arg(long)]
    text: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitArg {
    Frame,
    Token,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    io: Io,
    /// Model order (positions for the frame unit, tokens for the token unit)
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum)]
    unit: Option<UnitArg>,
}

#[derive(Args)]
struct Horizon {
    #[arg(long = "context-min", visible_alias = "context")]
    context_min: Option<usize>,
    #[arg(long = "pred-tokens", visible_alias = "tokens")]
    pred_tokens: Option<usize>,
    /// Only this trajectory id
    #[arg(long)]
    id: Option<String>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    io: Io,
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    horizon: Horizon,
    /// Ensemble size
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Endpoint agreement radius, metres
    #[arg(long)]
    agreement_radius: Option<f64>,
}

#[derive(Args)]
struct KalmanArgs {
    #[command(flatten)]
    io: Io,
    #[command(flatten)]
    horizon: Horizon,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth trajectories
    #[command(flatten)]
    io: Io,
    /// Predictions from `predict` or `kalman`
    #[arg(long)]
    pred: PathBuf,
    /// Also write per-pair samples here
    #[arg(long)]
    samples: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    /// Straight routes, one labelled defect class per vessel
    Labelled,
    /// Vessels following one bending lane
    Corridor,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    vessels: usize,
    #[arg(long, value_enum, default_value = "labelled")]
    scenario: Scenario,
    /// Defaults to <out>.manifest.json
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    io: Io,
    /// Predictions to draw with their context and truth
    #[arg(long)]
    pred: Option<PathBuf>,
}

#[derive(Debug)]
struct CliError {
    reason: &'static str,
    message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self { reason: e.reason(), message: e.to_string() }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError { reason: "io", message: format!("{}: {e}", path.display()) }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| io_error(path, e))
}

/// Writes through a temporary file in the target directory, renamed into
/// place only once complete.
fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<&mut File>) -> Result<(), Error>) -> CliResult {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_error(path, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush().map_err(|e| io_error(path, e))?;
    }
    tmp.persist(path).map_err(|e| io_error(path, e.error))?;
    Ok(())
}

fn read_trajectories(path: &Path) -> CliResult<Vec<CleanTrajectory>> {
    Ok(pipeline::read_trajectories(open(path)?, STEP_S)?)
}

fn select<'a>(trajs: &'a [CleanTrajectory], id: Option<&str>) -> CliResult<Vec<&'a CleanTrajectory>> {
    let picked: Vec<_> = trajs.iter().filter(|t| id.is_none_or(|id| t.id == id)).collect();
    if let (Some(id), true) = (id, picked.is_empty()) {
        return Err(CliError { reason: "pairing", message: format!("no trajectory {id}") });
    }
    Ok(picked)
}

fn run_clean(a: &CleanArgs, file: &FileConfig) -> CliResult {
    let defaults = CleaningConfig::default();
    let cfg = CleaningConfig {
        eps_global: file.pick(a.eps_global, "eps-global", defaults.eps_global)?,
        eps_local: file.pick(a.eps_local, "eps-local", defaults.eps_local)?,
        ..defaults
    };
    let ingested = pipeline::ingest(open(&a.io.input)?, Format::from_path(&a.io.input))?;
    let trajs = clean(&ingested.records, &cfg)?;
    log::info!("{} reports -> {} trajectories", ingested.records.len(), trajs.len());
    write_atomic(&a.io.out, |w| pipeline::write_trajectories(w, &trajs))
}

fn run_tokenize(a: &TokenizeArgs) -> CliResult {
    let trajs = read_trajectories(&a.io.input)?;
    let seqs = trajs
        .iter()
        .map(|t| {
            let cells = t.points.iter().map(|&p| point_to_pseudo_octal(p)).collect::<Result<Vec<_>, _>>()?;
            Ok(encode_trajectory(&cells, a.text)?.ids)
        })
        .collect::<Result<Vec<_>, Error>>()?;
    if a.text {
        write_atomic(&a.io.out, |w| corpus::write_text(w, &seqs))
    } else {
        write_atomic(&a.io.out, |w| corpus::write_binary(w, &seqs))
    }
}

fn run_train(a: &TrainArgs, file: &FileConfig) -> CliResult {
    let bytes = std::fs::read(&a.io.input).map_err(|e| io_error(&a.io.input, e))?;
    let seqs = corpus::read_any(&bytes)?;
    let d = NGramConfig::default();
    let unit = match a.unit {
        Some(UnitArg::Token) => Unit::Token,
        Some(UnitArg::Frame) => Unit::Frame,
        None => match file.pick(None, "unit", "frame".to_owned())?.as_str() {
            "frame" => Unit::Frame,
            "token" => Unit::Token,
            other => return Err(Error::Config(format!("unit must be frame or token, got {other}")).into()),
        },
    };
    let cfg = NGramConfig { order: file.pick(a.k, "k", d.order)?, alpha: file.pick(a.alpha, "alpha", d.alpha)?, unit, ..d };
    let model = NGramModel::train(&seqs, cfg)?;
    log::info!("{} sequences, {} contexts", seqs.len(), model.context_count());
    write_atomic(&a.io.out, |w| model.save(w))
}

fn horizon(h: &Horizon, file: &FileConfig) -> CliResult<(usize, usize)> {
    let context_min = file.pick(h.context_min, "context-min", report::DEFAULT_CONTEXTS_MIN[1])?;
    let pred_tokens = file.pick(h.pred_tokens, "pred-tokens", report::DEFAULT_HORIZONS_TOKENS[0])?;
    if context_min == 0 || report::horizon_frames(pred_tokens) == 0 {
        return Err(Error::Config("context and horizon must both cover at least one minute".into()).into());
    }
    Ok((context_min, pred_tokens))
}

fn run_predict(a: &PredictArgs, file: &FileConfig, seed: u64) -> CliResult {
    let trajs = read_trajectories(&a.io.input)?;
    let model = NGramModel::load(open(&a.model)?)?;
    let (context_min, pred_tokens) = horizon(&a.horizon, file)?;
    let cfg = EnsembleConfig {
        n: file.pick(a.n, "n", DEFAULT_ENSEMBLE)?,
        temperature: file.pick(a.temperature, "temperature", traj_core::predictor::DEFAULT_TEMPERATURE)?,
        agreement_radius_m: file.pick(a.agreement_radius, "agreement-radius", AGREEMENT_RADIUS_M)?,
        ..EnsembleConfig::new(report::horizon_frames(pred_tokens), seed)
    };
    let eligible: Vec<_> =
        select(&trajs, a.horizon.id.as_deref())?.into_iter().filter(|t| t.points.len() > context_min).collect();
    if eligible.is_empty() {
        return Err(Error::InsufficientContext { needed: context_min + 1, got: trajs.iter().map(|t| t.points.len()).max().unwrap_or(0) }.into());
    }
    let results: Vec<_> = eligible
        .par_iter()
        .map(|t| report::predict_trajectory(&model, t, context_min, pred_tokens, &cfg))
        .collect();
    let mut preds = Vec::new();
    let mut last_failure = None;
    for (t, r) in eligible.iter().zip(results) {
        match r {
            Ok(p) => preds.push(p),
            Err(e @ Error::NoViablePrediction { .. }) => {
                log::warn!("{}: {e}", t.id);
                last_failure = Some(e);
            }
            Err(e) => return Err(e.into()),
        }
    }
    if let (true, Some(e)) = (preds.is_empty(), last_failure) {
        return Err(e.into());
    }
    write_atomic(&a.io.out, |w| report::write_predictions(w, &preds))
}

fn run_kalman(a: &KalmanArgs, file: &FileConfig) -> CliResult {
    let trajs = read_trajectories(&a.io.input)?;
    let (context_min, pred_tokens) = horizon(&a.horizon, file)?;
    let cfg = KalmanConfig::default();
    let preds = select(&trajs, a.horizon.id.as_deref())?
        .into_iter()
        .filter(|t| t.points.len() > context_min)
        .map(|t| report::kalman_trajectory(t, context_min, pred_tokens, &cfg))
        .collect::<Result<Vec<_>, _>>()?;
    if preds.is_empty() {
        return Err(Error::InsufficientContext { needed: context_min + 1, got: trajs.iter().map(|t| t.points.len()).max().unwrap_or(0) }.into());
    }
    write_atomic(&a.io.out, |w| report::write_predictions(w, &preds))
}

fn read_predictions(path: &Path) -> CliResult<Vec<PredictionRecord>> {
    Ok(report::read_predictions(open(path)?)?)
}

fn run_eval(a: &EvalArgs) -> CliResult {
    let truth = read_trajectories(&a.io.input)?;
    let preds = read_predictions(&a.pred)?;
    let samples = report::score_all(&truth, &preds)?;
    let rows = report::eval_report(&samples)?;
    write_atomic(&a.io.out, |w| report::write_report_csv(w, &rows))?;
    if let Some(path) = &a.samples {
        write_atomic(path, |w| report::write_samples_csv(w, &samples))?;
    }
    Ok(())
}

fn run_synth(a: &SynthArgs, seed: u64) -> CliResult {
    let corpus = match a.scenario {
        Scenario::Labelled => synth::labelled_corpus(a.vessels, seed)?,
        Scenario::Corridor => synth::corridor_corpus(a.vessels, seed)?,
    };
    let mut records = corpus.records;
    records.sort_by_key(|x| (x.timestamp, x.mmsi));
    match Format::from_path(&a.out) {
        Format::Csv => write_atomic(&a.out, |w| pipeline::ingest::write_csv(w, &records))?,
        Format::Ndjson => write_atomic(&a.out, |w| pipeline::ingest::write_ndjson(w, &records))?,
    }
    let manifest = a.manifest.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".manifest.json");
        PathBuf::from(p)
    });
    write_atomic(&manifest, |w| {
        serde_json::to_writer_pretty(&mut *w, &corpus.manifest)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

fn run_export(a: &ExportArgs) -> CliResult {
    let trajs = read_trajectories(&a.io.input)?;
    let doc = match &a.pred {
        None => export_geojson(&trajs.iter().map(|t| Track { id: &t.id, role: Role::Truth, points: &t.points }).collect::<Vec<_>>())?,
        Some(path) => {
            let preds = read_predictions(path)?;
            let points = preds.iter().map(|p| p.points()).collect::<Result<Vec<_>, _>>()?;
            let mut tracks = Vec::new();
            for (p, pts) in preds.iter().zip(&points) {
                let t = trajs.iter().find(|t| t.id == p.trajectory_id).ok_or_else(|| {
                    Error::Pairing(format!("no trajectory {} for prediction", p.trajectory_id))
                })?;
                if t.points.len() <= p.context_min {
                    return Err(Error::Pairing(format!("trajectory {} is shorter than its context", t.id)).into());
                }
                let end = (p.context_min + pts.len()).min(t.points.len());
                tracks.push(Track { id: &t.id, role: Role::Context, points: &t.points[..p.context_min] });
                tracks.push(Track { id: &t.id, role: Role::Prediction, points: pts });
                tracks.push(Track { id: &t.id, role: Role::Truth, points: &t.points[p.context_min..end] });
            }
            export_geojson(&tracks)?
        }
    };
    write_atomic(&a.io.out, |w| {
        serde_json::to_writer(&mut *w, &doc)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

fn run(cli: Cli) -> CliResult {
    let file = FileConfig::load(cli.config.as_deref())?;
    let seed = file.pick(cli.seed, "seed", 0u64)?;
    match &cli.command {
        Command::Clean(a) => run_clean(a, &file),
        Command::Tokenize(a) => run_tokenize(a),
        Command::Train(a) => run_train(a, &file),
        Command::Predict(a) => run_predict(a, &file, seed),
        Command::Kalman(a) => run_kalman(a, &file),
        Command::Eval(a) => run_eval(a),
        Command::Synth(a) => run_synth(a, seed),
        Command::ExportGeojson(a) => run_export(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.reason, e.message);
            ExitCode::from(1)
        }
    }
}
