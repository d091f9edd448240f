//! Command-line front end: validate, score, stream, simulate, correlate.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use ahtn_core::engine::{
    score_recording, AssessmentReport, Engine, EngineConfig, EngineMode, Overrides, DEFAULT_PASS_THRESHOLD,
    DEFAULT_TIMEOUT,
};
use ahtn_core::eval::{correlate, monotonicity_report, KendallVariant, Method, ScorePairSet};
use ahtn_core::model::{parse_network, validate_network, TaskNetwork};
use ahtn_core::telemetry::{parse_manifest, parse_session, ReferenceSet, SessionReader, SessionRecording};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;

#[derive(Debug, Parser)]
#[command(name = "ahtn", version, about = "Assessment task network scoring")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a task network file.
    Validate { net: PathBuf },
    /// Score a recorded session and write the report.
    Score {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Score events read from standard input, printing feedback as it happens.
    Stream {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Mean score under increasing perturbation of a reference session.
    Simulate {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        /// Comma-separated, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        magnitudes: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Session to perturb; defaults to the first manifest entry.
        #[arg(long)]
        session: Option<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Correlation between system and grader scores.
    Correlate {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long, default_value = "tau-b")]
        kendall_variant: KendallVariant,
    },
}

#[derive(Debug, Args, Default)]
pub struct Tuning {
    /// Score lost per collision.
    #[arg(long)]
    pub penalty: Option<f64>,
    #[arg(long)]
    pub skip_time: Option<f64>,
    #[arg(long)]
    pub anomaly_wait: Option<f64>,
    /// Joint match radius in metres.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Degrees.
    #[arg(long)]
    pub orientation_tol: Option<f64>,
    /// Metres.
    #[arg(long)]
    pub position_tol: Option<f64>,
    #[arg(long)]
    pub text_tol: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_PASS_THRESHOLD)]
    pub pass_threshold: f64,
    /// Session seconds after start before scoring stops.
    #[arg(long, default_value_t = DEFAULT_TIMEOUT)]
    pub timeout: f64,
    /// Rigid x,y,z shift applied to user poses before scoring.
    #[arg(long, value_parser = parse_offset, allow_hyphen_values = true)]
    pub offset: Option<Vector3<f64>>,
}

impl Tuning {
    fn config(&self, mode: EngineMode) -> EngineConfig {
        EngineConfig {
            mode,
            pass_threshold: self.pass_threshold,
            timeout: self.timeout,
            overrides: Overrides {
                collision_penalty: self.penalty,
                skip_time: self.skip_time,
                anomaly_wait: self.anomaly_wait,
                match_radius: self.radius,
                orientation_tolerance: self.orientation_tol,
                position_tolerance: self.position_tol,
                text_tolerance: self.text_tol,
            },
        }
    }
}

fn parse_offset(s: &str) -> Result<Vector3<f64>, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("'{p}' is not a number")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [x, y, z] if parts.iter().all(|v| v.is_finite()) => Ok(Vector3::new(x, y, z)),
        _ => Err("expected three finite numbers x,y,z".into()),
    }
}

/// Reads `AHTN_LOG` (quiet, info, debug) and routes diagnostics to stderr.
pub fn init_logging() {
    let level = match std::env::var("AHTN_LOG").as_deref() {
        Ok("debug") => log::LevelFilter::Debug,
        Ok("info") => log::LevelFilter::Info,
        Ok("quiet") => log::LevelFilter::Off,
        _ => log::LevelFilter::Warn,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .try_init()
        .ok();
}

/// Parses `args` (program name first) and runs the command. Returns the exit
/// status: 0 success, 1 failure, 2 usage error.
pub fn run<I, S>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let sink: &mut dyn Write = if code == 0 { stdout } else { stderr };
            let _ = sink.write_all(rendered.as_bytes());
            return code;
        }
    };
    match execute(cli.command, stdin, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            1
        }
    }
}

fn execute(command: Command, stdin: &mut dyn BufRead, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Validate { net } => {
            let network = parse_network(&read(&net)?).with_context(|| format!("parsing {}", net.display()))?;
            let report = validate_network(&network);
            write!(out, "{report}")?;
            Ok(if report.ok { 0 } else { 1 })
        }
        Command::Score { net, refs, session, out: path, tuning } => {
            let network = load_network(&net)?;
            let references = load_references(&refs)?;
            let mut recording = load_session(&session)?;
            if let Some(offset) = tuning.offset {
                recording = recording.translated(offset);
            }
            let report = score_recording(&network, &references, &tuning.config(EngineMode::Batch), &recording)?;
            write_atomic(&path, &report.to_json())?;
            summarize(&report, out)?;
            Ok(0)
        }
        Command::Stream { net, refs, out: path, tuning } => {
            let network = load_network(&net)?;
            let references = load_references(&refs)?;
            let report = stream(network, references, &tuning, stdin, out)?;
            if let Some(path) = path {
                write_atomic(&path, &report.to_json())?;
            }
            Ok(0)
        }
        Command::Simulate { net, refs, magnitudes, trials, seed, session, csv, tuning } => {
            let network = load_network(&net)?;
            let references = load_references(&refs)?;
            let session_path = match session {
                Some(p) => p,
                None => first_manifest_entry(&refs)?,
            };
            let mut recording = load_session(&session_path)?;
            if let Some(offset) = tuning.offset {
                recording = recording.translated(offset);
            }
            let config = tuning.config(EngineMode::Batch);
            match monotonicity_report(&network, &references, &recording, &magnitudes, trials, seed, &config) {
                Ok(table) => {
                    write!(out, "{}", table.to_text())?;
                    if let Some(csv) = csv {
                        write_atomic(&csv, &table.to_csv())?;
                    }
                    Ok(0)
                }
                Err(e) => {
                    if let Some(partial) = e.partial() {
                        write!(out, "{}", partial.to_text())?;
                    }
                    Err(e.into())
                }
            }
        }
        Command::Correlate { pairs, method, kendall_variant } => {
            let set = ScorePairSet::parse(&read(&pairs)?).with_context(|| format!("parsing {}", pairs.display()))?;
            let r = correlate(&set, method, kendall_variant)?;
            writeln!(out, "{r:.6}")?;
            Ok(0)
        }
    }
}

/// Feeds stdin through the engine line by line. The engine starts at session
/// time 0 once the header lines have been read, matching batch scoring.
fn stream(
    network: TaskNetwork,
    references: ReferenceSet,
    tuning: &Tuning,
    stdin: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<AssessmentReport> {
    let mut engine = Engine::new(network, references, tuning.config(EngineMode::Stream))?;
    let mut reader = SessionReader::new();
    let offset = tuning.offset;
    let mut started = false;
    let mut line = String::new();
    let mut number = 0;
    loop {
        line.clear();
        if stdin.read_line(&mut line).context("reading standard input")? == 0 {
            break;
        }
        number += 1;
        let Some(mut event) = reader.feed(number, &line)? else { continue };
        if !started {
            let header = reader.header();
            engine.start(&header.session_id, &header.users, 0.0)?;
            started = true;
        }
        if let Some(offset) = offset {
            event.translate(offset);
        }
        for m in engine.ingest(&event)? {
            writeln!(out, "{m}")?;
        }
        out.flush()?;
    }
    reader.finish()?;
    if !started {
        let header = reader.header();
        engine.start(&header.session_id, &header.users, 0.0)?;
    }
    for m in engine.close() {
        writeln!(out, "{m}")?;
    }
    Ok(engine.finalize()?)
}

fn summarize(report: &AssessmentReport, out: &mut dyn Write) -> Result<()> {
    for s in &report.scopes {
        match s.delta {
            Some(d) => writeln!(out, "{} delta={d:.6}", s.scope)?,
            None => writeln!(out, "{} delta=none", s.scope)?,
        }
    }
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_network(path: &Path) -> Result<TaskNetwork> {
    let network = parse_network(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    let report = validate_network(&network);
    for w in report.warnings() {
        log::warn!("{}: [{}] {}", path.display(), w.node, w.message);
    }
    if !report.ok {
        let first = report.errors().next().map(|i| format!("[{}] {}", i.node, i.message)).unwrap_or_default();
        bail!("{} is not a valid network: {first}", path.display());
    }
    Ok(network)
}

fn load_references(path: &Path) -> Result<ReferenceSet> {
    ReferenceSet::load_manifest(path).with_context(|| format!("loading references from {}", path.display()))
}

fn load_session(path: &Path) -> Result<SessionRecording> {
    parse_session(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn first_manifest_entry(manifest: &Path) -> Result<PathBuf> {
    let entries = parse_manifest(&read(manifest)?)?;
    let first = entries.first().with_context(|| format!("{} lists no recordings", manifest.display()))?;
    Ok(manifest.parent().unwrap_or(Path::new(".")).join(&first.path))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
