//! Configuration-driven front end for `qsure`.
//!
//! Each command reads a TOML configuration, runs inside its own thread pool,
//! writes its outputs into the output directory, and finishes with a
//! `manifest.json` listing the config hash, the seed and a SHA-256 of every
//! output. Outputs never depend on the thread count.

pub mod commands;
pub mod config;
pub mod error;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Integrate,
    Compat,
    Patch,
    Price,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Integrate => "integrate",
            Command::Compat => "compat",
            Command::Patch => "patch",
            Command::Price => "price",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Command,
    pub config_sha256: String,
    pub master_seed: u64,
    pub status: String,
    pub exit_code: i32,
    pub outputs: Vec<OutputRecord>,
}

/// What a finished run wrote.
#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub headline: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Dispatch a command on an already parsed config, in the current pool.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<commands::Artifacts, CliError> {
    match command {
        Command::Simulate => commands::simulate(cfg),
        Command::Integrate => commands::integrate(cfg),
        Command::Compat => commands::compat(cfg),
        Command::Patch => commands::patch_cmd(cfg),
        Command::Price => commands::price(cfg),
        Command::Validate => commands::validate_cmd(cfg),
    }
}

/// A failed run; `outcome` is set when outputs were written before the
/// failure was reported.
#[derive(Debug)]
pub struct RunFailure {
    pub error: CliError,
    pub outcome: Option<RunOutcome>,
}

impl From<CliError> for Box<RunFailure> {
    fn from(error: CliError) -> Self {
        Box::new(RunFailure { error, outcome: None })
    }
}

/// Run a command end to end. Outputs and the manifest are written even when
/// a check fails; the failure is returned afterwards, alongside them.
pub fn run(inv: &Invocation) -> Result<RunOutcome, Box<RunFailure>> {
    let src = fs::read(&inv.config).map_err(|e| CliError::Io(format!("{}: {e}", inv.config.display())))?;
    let text = std::str::from_utf8(&src)
        .map_err(|e| CliError::Config(format!("{}: not UTF-8: {e}", inv.config.display())))?;
    let cfg = RunConfig::parse(text, inv.seed).map_err(|e| prefix(e, &inv.config))?;
    let out_dir = inv
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set [output] directory".into()))?;

    let threads = inv.threads.or(cfg.threads).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let artifacts = pool.install(|| execute(inv.command, &cfg))?;

    let outcome = write_outputs(&out_dir, inv.command, &sha256_hex(&src), cfg.master_seed, &artifacts)?;
    match artifacts.failure {
        None => Ok(outcome),
        Some(error) => Err(Box::new(RunFailure { error, outcome: Some(outcome) })),
    }
}

fn prefix(e: CliError, path: &Path) -> CliError {
    match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn write_outputs(
    dir: &Path,
    command: Command,
    config_sha256: &str,
    master_seed: u64,
    artifacts: &commands::Artifacts,
) -> Result<RunOutcome, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut outputs = Vec::new();
    for (name, bytes) in &artifacts.files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        outputs.push(OutputRecord { file: name.clone(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
    }
    let (status, exit_code) = match &artifacts.failure {
        None => ("ok".to_owned(), 0),
        Some(f) => (f.to_string(), f.exit_code()),
    };
    let manifest = Manifest {
        tool: "qsure",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_sha256: config_sha256.to_owned(),
        master_seed,
        status,
        exit_code,
        outputs,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    let path = dir.join("manifest.json");
    fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(RunOutcome { out_dir: dir.to_owned(), manifest, headline: artifacts.headline.clone() })
}
