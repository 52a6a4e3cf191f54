//! `seedevo`: train, evaluate, compare and replay seed-list policies.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use seedevo::analytics::{compare_runs, evaluate_genome, parse_scores, AnalyticsError};
use seedevo::config::ConfigError;
use seedevo::environments::{check_compatible, environment_from_spec, EnvError};
use seedevo::evolution::{EvolutionError, PolicyEvaluator, LOG_HEADER};
use seedevo::genome::GenomeError;
use seedevo::network::select_action;
use seedevo::{ActionSequence, EnvironmentFactory, Evolution, Genome, Method, RunConfig};

const MANIFEST_HEADER: &str = "seedevo-run v1";

#[derive(Parser)]
#[command(name = "seedevo", version, about = "Seed-list neuroevolution with novelty-driven archive resampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one evolution loop and write a run directory.
    Train {
        #[arg(long, value_enum)]
        method: MethodArg,
        /// `key = value` run configuration.
        #[arg(long)]
        config: PathBuf,
        /// `deceptive`, `stub:const`, `stub:count0` or a layout file.
        #[arg(long)]
        env: String,
        /// Run directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads for evaluation (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Master seed, overriding `master_seed` in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Record wall-clock milliseconds in the log instead of 0.
        #[arg(long)]
        timing: bool,
    },
    /// Play a checkpoint on held-out test episodes.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 30)]
        episodes: usize,
        /// Frame limit (default: `max_frames` of the run's config.cfg, if any).
        #[arg(long)]
        max_frames: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-episode CSV (default: next to the checkpoint, `.eval.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Welch t-test between two per-episode score files.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Re-run one episode of a checkpoint.
    Replay {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long, value_enum, default_value_t = Render::Ascii)]
        render: Render,
        #[arg(long)]
        max_frames: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Base,
    Novelty,
    Resample,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Base => Method::Base,
            MethodArg::Novelty => Method::Novelty,
            MethodArg::Resample => Method::Resample,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Render {
    Ascii,
    None,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Display) -> Self {
        Self { code: 2, message: message.to_string() }
    }

    fn config(message: impl Display) -> Self {
        Self { code: 3, message: message.to_string() }
    }

    fn env(message: impl Display) -> Self {
        Self { code: 4, message: message.to_string() }
    }

    fn io(path: &Path, err: impl Display) -> Self {
        Self { code: 5, message: format!("{}: {err}", path.display()) }
    }
}

impl From<EnvError> for Failure {
    fn from(e: EnvError) -> Self {
        Failure::env(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(e)
    }
}

impl From<GenomeError> for Failure {
    fn from(e: GenomeError) -> Self {
        match e {
            GenomeError::Io { path, source } => Failure::io(Path::new(&path), source),
            other => Failure::config(other),
        }
    }
}

impl From<EvolutionError> for Failure {
    fn from(e: EvolutionError) -> Self {
        match e {
            EvolutionError::Config(_) | EvolutionError::Truncation { .. } | EvolutionError::MethodMismatch { .. } => {
                Failure::config(e)
            }
            EvolutionError::Genome(g) => g.into(),
            EvolutionError::Sink(_) => Failure { code: 5, message: e.to_string() },
            _ => Failure::env(e),
        }
    }
}

impl From<AnalyticsError> for Failure {
    fn from(e: AnalyticsError) -> Self {
        match e {
            AnalyticsError::Genome(g) => g.into(),
            AnalyticsError::Environment(env) => env.into(),
            other => Failure::config(other),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::io(path, e))
}

fn set_threads(threads: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(format!("--threads: {e}")))?;
    }
    Ok(())
}

fn load_env(spec: &str) -> Result<Arc<dyn EnvironmentFactory>, Failure> {
    environment_from_spec(spec).map_err(|e| Failure::env(format!("--env {spec}: {e}")))
}

#[allow(clippy::too_many_arguments)]
fn train(
    method: Method,
    config_path: &Path,
    env_spec: &str,
    out: &Path,
    threads: Option<usize>,
    seed: Option<u64>,
    timing: bool,
) -> Result<(), Failure> {
    set_threads(threads)?;
    let config_text = read(config_path)?;
    let mut config = RunConfig::parse(&config_text).map_err(|e| Failure::config(format!("--config: {e}")))?;
    config.method = method;
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    config.validate()?;
    let env = load_env(env_spec)?;
    let arch = config.architecture_for(env.as_ref())?;
    let evaluator = PolicyEvaluator::new(env.as_ref(), arch.clone(), config.max_frames)?;

    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    write(
        &out.join("manifest.txt"),
        format!(
            "{MANIFEST_HEADER}\nversion={}\nmethod={}\nseed={}\nenv={env_spec}\narch={arch}\nstart-time={started}\n",
            env!("CARGO_PKG_VERSION"),
            config.method,
            config.master_seed,
        ),
    )?;
    write(&out.join("config.cfg"), &config_text)?;

    let mut log = format!("{LOG_HEADER}\n");
    let log_path = out.join("log.csv");
    let summary = Evolution::new(config.clone(), &evaluator)?.run_with(|outcome| {
        let row = outcome.log.csv_row(timing);
        log.push_str(&row);
        log.push('\n');
        fs::write(&log_path, &log).map_err(|e| EvolutionError::Sink(format!("{}: {e}", log_path.display())))?;
        let checkpoint = out.join(format!("elite_g{}.txt", outcome.generation));
        outcome
            .elite
            .save(&arch, &checkpoint)
            .map_err(|e| EvolutionError::Sink(e.to_string()))?;
        log::info!(
            "gen {} high={} elite={}{}",
            outcome.generation,
            outcome.log.high_score,
            outcome.log.elite_validation,
            if outcome.resampled { " resampled" } else { "" }
        );
        Ok(())
    })?;
    summary.elite.save(&arch, &out.join("elite.txt"))?;
    if config.method != Method::Base {
        write(&out.join("archive.txt"), summary.archive.to_dump())?;
    }
    let last = summary.logs.last().expect("at least one generation");
    println!(
        "method={} generations={} elite_validation={} best_validation={} out={}",
        config.method,
        summary.logs.len(),
        last.elite_validation,
        summary.logs.iter().map(|l| l.elite_validation).fold(f64::NEG_INFINITY, f64::max),
        out.display()
    );
    Ok(())
}

/// `max_frames` from the flag, else from `config.cfg` beside the checkpoint,
/// else the config default.
fn frames_for(checkpoint: &Path, flag: Option<usize>) -> Result<usize, Failure> {
    if let Some(f) = flag {
        if f == 0 {
            return Err(Failure::usage("--max-frames must be at least 1"));
        }
        return Ok(f);
    }
    let beside = checkpoint.parent().unwrap_or(Path::new(".")).join("config.cfg");
    if beside.is_file() {
        let config = RunConfig::parse(&read(&beside)?).map_err(|e| Failure::config(format!("{}: {e}", beside.display())))?;
        return Ok(config.max_frames);
    }
    Ok(RunConfig::default().max_frames)
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    checkpoint: &Path,
    env_spec: &str,
    episodes: usize,
    max_frames: Option<usize>,
    seed: u64,
    out: Option<PathBuf>,
    threads: Option<usize>,
) -> Result<(), Failure> {
    set_threads(threads)?;
    if episodes == 0 {
        return Err(Failure::usage("--episodes must be at least 1"));
    }
    let (genome, arch) = Genome::load(checkpoint)?;
    let env = load_env(env_spec)?;
    let frames = frames_for(checkpoint, max_frames)?;
    let report = evaluate_genome(&genome, &arch, env.as_ref(), episodes, frames, seed, "test")?;
    let out = out.unwrap_or_else(|| checkpoint.with_extension("eval.csv"));
    write(&out, report.to_csv())?;
    println!("{report}");
    println!("episodes written to {}", out.display());
    Ok(())
}

fn compare(a: &Path, b: &Path, alpha: f64) -> Result<(), Failure> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Failure::usage("--alpha must lie strictly between 0 and 1"));
    }
    let scores = |path: &Path| -> Result<Vec<f64>, Failure> {
        parse_scores(&read(path)?).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
    };
    let comparison = compare_runs(&scores(a)?, &scores(b)?, alpha)?;
    println!("{comparison}");
    Ok(())
}

fn replay(checkpoint: &Path, env_spec: &str, render: Render, max_frames: Option<usize>, seed: u64) -> Result<(), Failure> {
    let (genome, arch) = Genome::load(checkpoint)?;
    let env = load_env(env_spec)?;
    check_compatible(&arch, env.as_ref())?;
    let frames = frames_for(checkpoint, max_frames)?;
    let weights = genome.decode(&arch);

    let mut episode = env.create(seed);
    let mut actions = Vec::new();
    let mut score = 0.0;
    if render == Render::Ascii {
        if let Some(grid) = episode.render() {
            println!("frame 0\n{grid}");
        }
    }
    while actions.len() < frames {
        let scores = arch.forward(&weights, &episode.observe()).map_err(EnvError::from)?;
        let action = select_action(&scores).map_err(EnvError::from)?;
        let transition = episode.step(action)?;
        actions.push(action);
        score += transition.reward;
        if render == Render::Ascii {
            if let Some(grid) = episode.render() {
                println!("frame {} action {action} reward {}\n{grid}", actions.len(), transition.reward);
            }
        }
        if transition.done {
            break;
        }
    }
    let bc = ActionSequence::from_actions(&actions, frames).map_err(EnvError::from)?;
    println!("actions {}", &bc.to_string()[..actions.len()]);
    println!("score={score} lifespan={} bc={bc}", actions.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { method, config, env, out, threads, seed, timing } => {
            train(method.into(), &config, &env, &out, threads, seed, timing)
        }
        Command::Evaluate { checkpoint, env, episodes, max_frames, seed, out, threads } => {
            evaluate(&checkpoint, &env, episodes, max_frames, seed, out, threads)
        }
        Command::Compare { a, b, alpha } => compare(&a, &b, alpha),
        Command::Replay { checkpoint, env, render, max_frames, seed } => {
            replay(&checkpoint, &env, render, max_frames, seed)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
