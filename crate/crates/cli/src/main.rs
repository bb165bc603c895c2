//! `turbo3d` command-line front end. Every subcommand writes a JSON
//! artifact (plus CSV where tabular) into the output directory and prints
//! a one-line summary. Each artifact embeds the resolved configuration;
//! the matching `<command>.config.toml` re-runs it via `--config`.

mod commands;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{CommandFactory, Parser};
use serde::Serialize;
use sha2::{Digest, Sha256};

use commands::Cmd;

#[derive(Parser, Debug)]
#[command(name = "turbo3d", version, about = "3D turbo code analysis and simulation")]
struct Cli {
    /// Output directory for artifacts.
    #[arg(long, global = true, env = "TURBO3D_OUT", default_value = ".")]
    out: PathBuf,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run a stored experiment config instead of a subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

/// Artifact wrapper: tool version, config hash, resolved config, result.
#[derive(Serialize)]
pub struct Artifact<'a, T: Serialize> {
    pub tool: &'static str,
    pub config_hash: String,
    pub config: &'a Cmd,
    pub result: T,
}

pub const TOOL: &str = concat!("turbo3d ", env!("CARGO_PKG_VERSION"));

/// Where and under which name a command writes its artifacts.
pub struct Output {
    dir: PathBuf,
    stem: String,
    config_toml: String,
    hash: String,
}

impl Output {
    fn new(dir: &Path, cmd: &Cmd) -> Result<Self> {
        let config_toml = toml::to_string(cmd).context("serializing config")?;
        let hash = hex::encode(Sha256::digest(config_toml.as_bytes()));
        Ok(Output { dir: dir.to_path_buf(), stem: cmd.name().to_string(), config_toml, hash })
    }

    fn path(&self, ext: &str) -> PathBuf {
        self.dir.join(format!("{}.{ext}", self.stem))
    }

    /// Writes `<command>.json` and `<command>.config.toml`.
    pub fn json<T: Serialize>(&self, cmd: &Cmd, result: T) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let a = Artifact { tool: TOOL, config_hash: self.hash.clone(), config: cmd, result };
        let p = self.path("json");
        std::fs::write(&p, serde_json::to_string_pretty(&a)? + "\n").with_context(|| format!("writing {}", p.display()))?;
        std::fs::write(self.path("config.toml"), &self.config_toml)?;
        Ok(p)
    }

    /// Writes `<command>.csv` with a leading comment line carrying the
    /// tool version and config hash.
    pub fn csv(&self, body: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.dir)?;
        let p = self.path("csv");
        std::fs::write(&p, format!("# {TOOL} config {}\n{body}", self.hash)).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }
}

fn load_config(path: &Path) -> Result<Cmd> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let cmd = match (cli.cmd, cli.config) {
        (Some(_), Some(_)) => bail!("give either a subcommand or --config, not both"),
        (Some(c), None) => c,
        (None, Some(p)) => load_config(&p)?,
        (None, None) => unreachable!("handled in main"),
    };
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    }
    let out = Output::new(&cli.out, &cmd)?;
    let summary = commands::dispatch(&cmd, &out)?;
    println!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    if cli.cmd.is_none() && cli.config.is_none() {
        let _ = Cli::command().write_help(&mut std::io::stderr());
        eprintln!();
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
