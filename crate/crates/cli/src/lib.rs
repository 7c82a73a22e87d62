//! Command-line front end: argument parsing, configuration, output files and
//! run manifests for the `unimodal-core` experiments.

mod commands;
pub mod manifest;
pub mod settings;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use unimodal_core::ErrorClass;

use manifest::{run_id, unix_now, OutputDir, RunManifest};
use settings::Settings;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] unimodal_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e.class() {
                ErrorClass::Usage => EXIT_USAGE,
                ErrorClass::Validation => EXIT_VALIDATION,
                ErrorClass::Numerical => EXIT_NUMERICAL,
            },
            CliError::Io(_) => EXIT_NUMERICAL,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "unimodal-clt",
    version,
    about = "Invariant densities, dynamical quantities and CLT experiments for unimodal map families"
)]
struct Cli {
    /// Flat `key = value` configuration file; command-line keys win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "PATH", default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (0: one per core).
    #[arg(long, global = true, value_name = "N", env = "UNIMODAL_CLT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Keys accepted as flags by every subcommand. Each command reads the ones it
/// needs; the same names work in the config file (with `_` for `-`).
#[derive(Debug, Args)]
struct Keys {
    #[arg(long)]
    family: Option<String>,
    #[arg(long = "t")]
    t: Option<String>,
    /// Grid cells, or orbit length for `orbit`.
    #[arg(long = "n")]
    n: Option<String>,
    /// Observable: x, x^2, const:<c> or cos:<k>.
    #[arg(long, alias = "observable")]
    phi: Option<String>,
    /// Parameter window `a,b`.
    #[arg(long)]
    window: Option<String>,
    #[arg(long = "h", allow_hyphen_values = true)]
    h: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    direct_grid: Option<String>,
    #[arg(long)]
    orbit_length: Option<String>,
    #[arg(long)]
    neg_log_h: Option<String>,
    #[arg(long)]
    orbit_lengths: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    steps: Option<String>,
    #[arg(long = "j")]
    j: Option<String>,
    #[arg(long)]
    param_window: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    sigma_mode: Option<String>,
    /// log2 grid sizes for the resolvent probe of `ly-check`.
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long)]
    location: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    /// Any other key, as `KEY=VALUE`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Keys {
    fn apply(&self, s: &mut Settings) -> Result<(), CliError> {
        let pairs = [
            ("family", &self.family),
            ("t", &self.t),
            ("n", &self.n),
            ("phi", &self.phi),
            ("window", &self.window),
            ("h", &self.h),
            ("samples", &self.samples),
            ("grid", &self.grid),
            ("direct_grid", &self.direct_grid),
            ("orbit_length", &self.orbit_length),
            ("neg_log_h", &self.neg_log_h),
            ("orbit_lengths", &self.orbit_lengths),
            ("steps", &self.steps),
            ("j", &self.j),
            ("param_window", &self.param_window),
            ("mode", &self.mode),
            ("trials", &self.trials),
            ("sigma_mode", &self.sigma_mode),
            ("sizes", &self.sizes),
            ("location", &self.location),
            ("tol", &self.tol),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                s.set(k, v.clone());
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            s.set(k, v.trim());
        }
        Ok(())
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Invariant density on a uniform grid.
    Density(Keys),
    /// L, ℓ, S, J, σ, Ψ and R for one parameter.
    Quantities(Keys),
    /// Critical orbit f(c), …, fⁿ(c).
    Orbit(Keys),
    /// Phase cylinders at one parameter, or parameter cylinders with `--param-window`.
    Partition(Keys),
    /// Wild-part integral against the truncated Birkhoff surrogate.
    WildCheck(Keys),
    /// CLT over the window with orbit-sum surrogates.
    CltSurrogate(Keys),
    /// CLT over the window with direct Newton quotients.
    CltDirect(Keys),
    /// Variance of Ψ-normalized surrogate quotients against −log h.
    VarianceScaling(Keys),
    /// ‖ρ_{t+h} − ρ_t‖₁ against |h|(log(1/|h|) + 1).
    Modulus(Keys),
    /// Growth of the largest un-normalized quotient with orbit length.
    LipschitzProbe(Keys),
    /// Lasota–Yorke fit and, with `--sizes`, the resolvent log-bound probe.
    LyCheck(Keys),
}

impl Command {
    fn parts(&self) -> (&'static str, &Keys) {
        match self {
            Command::Density(k) => ("density", k),
            Command::Quantities(k) => ("quantities", k),
            Command::Orbit(k) => ("orbit", k),
            Command::Partition(k) => ("partition", k),
            Command::WildCheck(k) => ("wild-check", k),
            Command::CltSurrogate(k) => ("clt-surrogate", k),
            Command::CltDirect(k) => ("clt-direct", k),
            Command::VarianceScaling(k) => ("variance-scaling", k),
            Command::Modulus(k) => ("modulus", k),
            Command::LipschitzProbe(k) => ("lipschitz-probe", k),
            Command::LyCheck(k) => ("ly-check", k),
        }
    }
}

fn execute(cli: Cli) -> Result<PathBuf, CliError> {
    let started = unix_now();
    let mut settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let (name, keys) = cli.command.parts();
    keys.apply(&mut settings)?;
    if let Some(seed) = cli.seed {
        settings.set("seed", seed.to_string());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let mut out = OutputDir::create(&cli.out_dir)?;
    pool.install(|| commands::run(name, &settings, &mut out))?;
    for key in settings.unused() {
        eprintln!("note: key '{key}' is not used by {name}");
    }
    let config = settings.resolved();
    let manifest = RunManifest {
        command: name.into(),
        run_id: run_id(name, &config),
        seed: config.get("seed").and_then(|s| s.parse().ok()),
        config,
        started_unix: started,
        finished_unix: 0.0,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        files: Vec::new(),
    };
    out.finish(manifest)
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
