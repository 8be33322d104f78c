//! `crashcast` command line: `run`, `simulate`, `eval`, `compare`.
//!
//! Exit codes: 0 success, 1 configuration or scenario-spec error, 2 input
//! parse error (including ordering errors and missing ground truth), 3 I/O.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::collision::{parse_alerts, write_alerts};
use crate::config::{ConfigError, EngineConfig, Gating, RunConfig};
use crate::evaluation::{compare_predictors, match_alerts, EvalReport, SceneInput};
use crate::ingest::{load_stream, TrackFormat};
use crate::pipeline::{run_stream, RunError, RunOutcome};
use crate::predictor::PredictorSpec;
use crate::simulator::{generate, standard_suite, GroundTruthFile, ScenarioSpec, SpecError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Input(_) => 2,
            Self::Io(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => c.into(),
            RunError::Step(s) => Self::Input(s.to_string()),
        }
    }
}

impl From<crate::ingest::IngestError> for CliError {
    fn from(e: crate::ingest::IngestError) -> Self {
        match e {
            crate::ingest::IngestError::Io { .. } => Self::Io(e.to_string()),
            other => Self::Input(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "crashcast", version, about = "Forecast collisions from per-frame object tracks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stream track files through the engine and write alert files.
    Run(RunArgs),
    /// Generate synthetic scenes with ground-truth sidecars.
    Simulate(SimulateArgs),
    /// Score alert files against ground-truth sidecars.
    Eval(EvalArgs),
    /// Replay scenes with two predictors side by side.
    Compare(CompareArgs),
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if absent).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override a config value, e.g. `--set engine.horizon=15`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    /// `intersect_only` (default) or `deviation_gated`.
    #[arg(long, value_parser = parse_gating)]
    pub gating: Option<Gating>,
    /// Noise seed for simulated scenes.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_gating(s: &str) -> Result<Gating, String> {
    s.parse().map_err(|e: ConfigError| e.to_string())
}

fn parse_format(s: &str) -> Result<TrackFormat, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    /// Track file, or a directory of them for batch mode.
    #[arg(long)]
    pub input: PathBuf,
    /// `records` (JSON lines, default) or `mot` (MOT-Challenge CSV).
    #[arg(long, value_parser = parse_format)]
    pub format: Option<TrackFormat>,
    /// Predictor, e.g. `constant_velocity:k=3` or `least_squares:d=2`.
    #[arg(long)]
    pub predictor: Option<String>,
    /// Process batch scenes on multiple threads.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Scenario spec files (TOML).
    #[arg(long)]
    pub input: Vec<PathBuf>,
    /// Emit the built-in eight-scene suite (v1..v8).
    #[arg(long)]
    pub suite: bool,
    /// Noise sigma for `--suite` scenes.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directories holding `*.alerts.jsonl` and `*.gt.json` files.
    #[arg(long)]
    pub input: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directories holding `*.tracks.jsonl` and `*.gt.json` files.
    #[arg(long)]
    pub input: Vec<PathBuf>,
    /// Two predictor specs; defaults to constant_velocity vs least_squares:d=2.
    #[arg(long)]
    pub predictor: Vec<String>,
    #[arg(long)]
    pub parallel: bool,
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("crashcast: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Compare(a) => cmd_compare(&a),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let text = match &common.config {
        Some(p) => read(p)?,
        None => String::new(),
    };
    let mut cfg = RunConfig::from_toml_with_overrides(&text, &common.overrides)?;
    if let Some(g) = common.gating {
        cfg.engine.gating = g;
    }
    Ok(cfg)
}

/// Strips the track/scenario suffixes to get a scene name.
fn scene_name(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    for suffix in [".tracks.jsonl", ".alerts.jsonl", ".gt.json", ".jsonl", ".toml", ".txt", ".csv"] {
        if let Some(stem) = name.strip_suffix(suffix) {
            return stem.to_owned();
        }
    }
    name
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

fn track_files(input: &Path, format: TrackFormat) -> Result<Vec<PathBuf>, CliError> {
    if !input.exists() {
        return Err(CliError::Io(format!("{}: no such file or directory", input.display())));
    }
    if input.is_file() {
        return Ok(vec![input.to_owned()]);
    }
    let keep = |p: &PathBuf| {
        let n = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match format {
            TrackFormat::Records => n.ends_with(".tracks.jsonl"),
            TrackFormat::Mot => n.ends_with(".txt") || n.ends_with(".csv"),
        }
    };
    Ok(list_dir(input)?.into_iter().filter(keep).collect())
}

/// Runs `f` over `items`, on scoped threads when `parallel`; results keep input order.
fn map_scenes<T: Sync, R: Send>(items: &[T], parallel: bool, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if !parallel || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = items.iter().map(|it| s.spawn(|| f(it))).collect();
        handles.into_iter().map(|h| h.join().expect("scene worker panicked")).collect()
    })
}

fn summary_text(scene: &str, input: &Path, outcome: &RunOutcome, cfg: &RunConfig) -> String {
    let mut s = String::new();
    writeln!(s, "scene = {:?}", scene).unwrap();
    let file = input.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    writeln!(s, "input = {file:?}").unwrap();
    writeln!(s, "frames_processed = {}", outcome.frames_processed).unwrap();
    writeln!(s, "objects_seen = {}", outcome.objects_seen).unwrap();
    writeln!(s, "alerts = {}", outcome.alerts.len()).unwrap();
    // Wall time varies run to run; it lives beside the summary so this file stays reproducible.
    writeln!(s, "timing = \"{scene}.timing.json\"").unwrap();
    writeln!(s, "\n# effective configuration").unwrap();
    s.push_str(&cfg.to_toml());
    s
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.common)?;
    if let Some(f) = args.format {
        cfg.ingest.format = f;
    }
    if let Some(p) = &args.predictor {
        cfg.predictor = p.parse::<PredictorSpec>()?;
    }
    let engine = cfg.engine_config()?;
    let files = track_files(&args.input, cfg.ingest.format)?;
    ensure_dir(&args.common.out)?;

    let results = map_scenes(&files, args.parallel, |path| -> Result<(PathBuf, RunOutcome), CliError> {
        let frames = load_stream(path, cfg.ingest.format)?;
        let outcome = run_stream(&engine, &frames)?;
        Ok((path.clone(), outcome))
    });
    for r in results {
        let (path, outcome) = r?;
        let scene = scene_name(&path);
        let out = &args.common.out;
        write(&out.join(format!("{scene}.alerts.jsonl")), &write_alerts(&outcome.alerts, engine.fps))?;
        write(&out.join(format!("{scene}.summary.toml")), &summary_text(&scene, &path, &outcome, &cfg))?;
        let wall_ms = outcome.wall_time.as_secs_f64() * 1e3;
        write(&out.join(format!("{scene}.timing.json")), &format!("{{\"wall_time_ms\":{wall_ms:.3}}}\n"))?;
        println!(
            "{scene}: frames={} objects={} alerts={} wall_time_ms={wall_ms:.3}",
            outcome.frames_processed,
            outcome.objects_seen,
            outcome.alerts.len()
        );
    }
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.common)?;
    let engine = cfg.engine_config()?;
    let mut specs: Vec<(String, ScenarioSpec)> = Vec::new();
    if args.suite {
        specs.extend(standard_suite(args.noise, args.common.seed.unwrap_or(0)));
    }
    for path in &args.input {
        let mut spec = ScenarioSpec::from_toml(&read(path)?)?;
        if let Some(seed) = args.common.seed {
            spec.seed = seed;
        }
        specs.push((scene_name(path), spec));
    }
    if specs.is_empty() {
        return Err(CliError::Config("simulate needs --input spec files or --suite".into()));
    }
    ensure_dir(&args.common.out)?;
    for (name, spec) in &specs {
        spec.validate_for(&engine).map_err(|e| CliError::Config(format!("{name}: {e}")))?;
        let scene = generate(spec).map_err(|e| CliError::Config(format!("{name}: {e}")))?;
        write(&args.common.out.join(format!("{name}.tracks.jsonl")), &scene.track_text())?;
        write(&args.common.out.join(format!("{name}.gt.json")), &scene.gt_file().to_json())?;
        match scene.ground_truth.0 {
            Some(c) => println!("{name}: {} collision at frame {} ({}, {})", spec.kind, c.frame, c.pair.0, c.pair.1),
            None => println!("{name}: {} no collision", spec.kind),
        }
    }
    Ok(())
}

/// Files across `dirs` keyed by scene name, for one suffix.
fn collect(dirs: &[PathBuf], suffix: &str) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let mut out = BTreeMap::new();
    for d in dirs {
        if !d.is_dir() {
            return Err(CliError::Io(format!("{}: not a directory", d.display())));
        }
        for p in list_dir(d)? {
            if p.file_name().is_some_and(|n| n.to_string_lossy().ends_with(suffix)) {
                out.insert(scene_name(&p), p);
            }
        }
    }
    Ok(out)
}

fn load_gt(path: &Path) -> Result<GroundTruthFile, CliError> {
    GroundTruthFile::from_json(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_report(out: &Path, stem: &str, table: &str, jsonl: &str) -> Result<(), CliError> {
    ensure_dir(out)?;
    write(&out.join(format!("{stem}.txt")), table)?;
    write(&out.join(format!("{stem}.jsonl")), jsonl)?;
    print!("{table}");
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.common)?;
    let alerts = collect(&args.input, ".alerts.jsonl")?;
    let gts = collect(&args.input, ".gt.json")?;
    let mut report = EvalReport::default();
    for (scene, path) in &alerts {
        let gt_path = gts
            .get(scene)
            .ok_or_else(|| CliError::Input(format!("no ground truth `{scene}.gt.json` for {}", path.display())))?;
        let gt = load_gt(gt_path)?;
        let parsed = parse_alerts(&read(path)?)
            .map_err(|(line, m)| CliError::Input(format!("{}:{line}: {m}", path.display())))?;
        report.scenes.push(match_alerts(scene, &parsed, &gt.event(), gt.fps, cfg.lookahead_for(gt.fps)));
    }
    write_report(&args.common.out, "eval", &report.render_table(), &report.to_jsonl())
}

pub fn cmd_compare(args: &CompareArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.common)?;
    let engine: EngineConfig = cfg.engine_config()?;
    let (spec_a, spec_b) = match args.predictor.as_slice() {
        [] => (PredictorSpec::constant_velocity(3), PredictorSpec::least_squares(2)),
        [a, b] => (a.parse()?, b.parse()?),
        other => {
            return Err(CliError::Config(format!("compare takes exactly two --predictor values, got {}", other.len())))
        }
    };
    for spec in [spec_a, spec_b] {
        EngineConfig { predictor: spec, ..engine.clone() }.validate()?;
    }
    let tracks = collect(&args.input, ".tracks.jsonl")?;
    let gts = collect(&args.input, ".gt.json")?;
    let entries: Vec<(&String, &PathBuf)> = tracks.iter().collect();
    let scenes = map_scenes(&entries, args.parallel, |(scene, path)| -> Result<SceneInput, CliError> {
        let gt_path = gts
            .get(*scene)
            .ok_or_else(|| CliError::Input(format!("no ground truth `{scene}.gt.json` for {}", path.display())))?;
        let gt = load_gt(gt_path)?;
        Ok(SceneInput {
            name: (*scene).clone(),
            frames: load_stream(path, TrackFormat::Records)?,
            ground_truth: gt.event(),
            fps: gt.fps,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let cmp = compare_predictors(&scenes, &engine, spec_a, spec_b, |fps| cfg.lookahead_for(fps))?;
    write_report(&args.common.out, "compare", &cmp.render_table(), &cmp.to_jsonl())
}
