use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use nsir::config::{self, ConfigError, RawConfig};
use nsir::report::{self, ReportError};
use nsir::runner::{self, RunnerError};
use nsir::{presets, sweep};

/// Exit codes: 0 success, 2 configuration error, 3 solver or I/O error,
/// 4 invariant check failure.
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

#[derive(Parser)]
#[command(name = "nsir", version, about = "Numerical laboratory for nonlocal SIR epidemics")]
struct Cli {
    /// Output root; overrides the NSIR_OUT_ROOT environment variable
    /// (default ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one configured run and write its artifacts.
    Run {
        /// TOML config file; optional when --preset supplies the base.
        config: Option<PathBuf>,
        /// Start from a named preset (see `nsir presets`).
        #[arg(long)]
        preset: Option<String>,
        /// Field overrides, e.g. --set params.mu=0.5 (repeatable; applied
        /// after the file and preset).
        #[arg(long = "set", value_name = "PATH=VALUE")]
        set: Vec<String>,
        /// Run name; also the output subdirectory.
        #[arg(long)]
        name: Option<String>,
    },
    /// Repeat a base run along one numeric axis.
    Sweep {
        config: PathBuf,
        #[arg(long = "set", value_name = "PATH=VALUE")]
        set: Vec<String>,
    },
    /// Principal eigenvalue, threshold ratio, and optional critical length.
    Eigen {
        /// Nonlocal gain coefficient.
        #[arg(long)]
        c1: f64,
        /// Local loss coefficient.
        #[arg(long)]
        c2: f64,
        /// Diffusivity.
        #[arg(long, default_value_t = 1.0)]
        d: f64,
        /// Interval half-width.
        #[arg(long, default_value_t = 1.0)]
        half: f64,
        /// Grid nodes.
        #[arg(long, default_value_t = 401)]
        n: usize,
        /// Also locate the critical interval length.
        #[arg(long)]
        l_star: bool,
        /// Kernel family: uniform, top_hat, or truncated_gaussian.
        #[arg(long, default_value = "truncated_gaussian")]
        family: String,
        /// Kernel width parameter.
        #[arg(long, default_value_t = 0.05)]
        width: f64,
        #[arg(long, default_value = "eigen")]
        name: String,
    },
    /// Re-verify every artifact under a directory and write report.json.
    Report { dir: PathBuf },
    /// List the built-in presets.
    Presets,
}

#[derive(Debug)]
enum CliError {
    Config(ConfigError),
    Runner(RunnerError),
    Report(ReportError),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}
impl From<RunnerError> for CliError {
    fn from(e: RunnerError) -> Self {
        match e {
            RunnerError::Config(c) => CliError::Config(c),
            other => CliError::Runner(other),
        }
    }
}
impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Report(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runner(_) | CliError::Report(_) => EXIT_SOLVER,
        }
    }

    fn report(&self) {
        let top: &dyn std::error::Error = match self {
            CliError::Config(e) => e,
            CliError::Runner(e) => e,
            CliError::Report(e) => e,
        };
        eprintln!("error: {top}");
        let mut source = top.source();
        while let Some(s) = source {
            eprintln!("  caused by: {s}");
            source = s.source();
        }
    }
}

fn out_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("NSIR_OUT_ROOT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

fn load_raw(
    config: Option<&PathBuf>,
    preset: Option<String>,
    set: &[String],
) -> Result<RawConfig, ConfigError> {
    let mut raw = match config {
        Some(path) => RawConfig::from_file(path)?,
        None => RawConfig::default(),
    };
    if let Some(name) = preset {
        raw.run.get_or_insert_with(Default::default).preset = Some(name);
    }
    let mut raw = raw.with_preset_applied()?;
    for assignment in set {
        config::set_override(&mut raw, assignment)?;
    }
    Ok(raw)
}

fn print_checks(checks: &[runner::CheckReport]) {
    for check in checks {
        let mark = if check.ok { "ok  " } else { "FAIL" };
        println!("  {mark} {}: {}", check.name, check.detail);
    }
}

fn cmd_run(
    out: Option<PathBuf>,
    config: Option<PathBuf>,
    preset: Option<String>,
    set: Vec<String>,
    name: Option<String>,
) -> Result<u8, CliError> {
    if config.is_none() && preset.is_none() {
        return Err(ConfigError::Invalid {
            path: "run".into(),
            message: "give a config file, a --preset, or both".into(),
        }
        .into());
    }
    let mut raw = load_raw(config.as_ref(), preset, &set)?;
    if let Some(name) = name {
        raw.run.get_or_insert_with(Default::default).name = Some(name);
    }
    let fallback = config.as_deref().map(file_stem).unwrap_or_else(|| "run".into());
    let cfg = config::resolve(&raw, &fallback)?;

    let out_dir = out_root(out).join(&cfg.name);
    let started = Instant::now();
    let outcome = runner::execute(&cfg, &out_dir)?;
    println!(
        "run {} ({} model) finished in {:.2}s -> {}",
        outcome.name,
        outcome.model,
        started.elapsed().as_secs_f64(),
        outcome.out_dir.display()
    );
    print_checks(&outcome.checks);
    Ok(if outcome.ok { 0 } else { EXIT_INVARIANT })
}

fn cmd_sweep(out: Option<PathBuf>, config: PathBuf, set: Vec<String>) -> Result<u8, CliError> {
    let raw = load_raw(Some(&config), None, &set)?;
    let sweep_cfg = config::resolve_sweep(&raw, &file_stem(&config))?;
    let out_dir = out_root(out).join(&sweep_cfg.name);
    let started = Instant::now();
    let outcome = sweep::run_sweep(&sweep_cfg, &out_dir)?;
    println!(
        "sweep {} over {} ({} points, {} failed) finished in {:.2}s -> {}",
        sweep_cfg.name,
        sweep_cfg.axis,
        outcome.records.len(),
        outcome.failed,
        started.elapsed().as_secs_f64(),
        outcome.out_dir.display()
    );
    for record in &outcome.records {
        if let Err(message) = &record.outcome {
            println!("  point {} ({} = {}): {message}", record.index, sweep_cfg.axis, record.value);
        }
    }
    Ok(if !outcome.checks_ok {
        EXIT_INVARIANT
    } else if outcome.failed > 0 {
        EXIT_SOLVER
    } else {
        0
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_eigen(
    out: Option<PathBuf>,
    c1: f64,
    c2: f64,
    d: f64,
    half: f64,
    n: usize,
    l_star: bool,
    family: String,
    width: f64,
    name: String,
) -> Result<u8, CliError> {
    let mut raw = RawConfig::default();
    raw.run = Some(config::RawRun {
        model: Some("eigen".into()),
        name: Some(name),
        ..Default::default()
    });
    raw.kernel = Some(config::RawKernel {
        family: Some(family),
        width: Some(width),
        normalization: Some("none".into()),
    });
    raw.eigen = Some(config::RawEigen {
        d: Some(d),
        c1: Some(c1),
        c2: Some(c2),
        half: Some(half),
        n: Some(n),
        l_star: Some(l_star),
        length_tol: None,
    });
    let cfg = config::resolve(&raw, "eigen")?;
    let out_dir = out_root(out).join(&cfg.name);
    let outcome = runner::execute(&cfg, &out_dir)?;
    if let runner::Detail::Eigen(j) = &outcome.detail {
        println!("lambda1 = {:.12e}", j.lambda1);
        println!("r02     = {:.12e}", j.r02);
        if let Some(l) = j.l_star {
            println!("l_star  = {:.12e}", l);
        }
        println!("artifacts -> {}", outcome.out_dir.display());
    }
    print_checks(&outcome.checks);
    Ok(if outcome.ok { 0 } else { EXIT_INVARIANT })
}

fn cmd_report(dir: PathBuf) -> Result<u8, CliError> {
    let outcome = report::run_report(&dir)?;
    println!(
        "report: {} runs, {} failed verdicts -> {}",
        outcome.runs,
        outcome.failures,
        outcome.report_path.display()
    );
    Ok(if outcome.all_ok { 0 } else { EXIT_INVARIANT })
}

fn cmd_presets() -> u8 {
    for (name, summary) in presets::SUMMARIES {
        println!("{name:8} {summary}");
    }
    0
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Run { config, preset, set, name } => cmd_run(cli.out, config, preset, set, name),
        Command::Sweep { config, set } => cmd_sweep(cli.out, config, set),
        Command::Eigen { c1, c2, d, half, n, l_star, family, width, name } => {
            cmd_eigen(cli.out, c1, c2, d, half, n, l_star, family, width, name)
        }
        Command::Report { dir } => cmd_report(dir),
        Command::Presets => Ok(cmd_presets()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            e.report();
            ExitCode::from(e.exit_code())
        }
    }
}
