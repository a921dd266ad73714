//! Batch driver: `sumhess <command> --config <path> [--seed N] [--out DIR]`.
//!
//! Exit codes: 0 success, 1 mathematical or numerical failure, 2 usage error.
//! Every run writes `config.resolved.json` plus command-specific CSV/JSON
//! files into the output directory. Outputs contain no timings or paths, so
//! identical `(config, seed)` pairs give byte-identical files.

mod config;
mod falsify;
mod identities;
mod pde;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub use config::RunConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Identities,
    Falsify,
    Solve,
    Mms,
    Pogorelov,
}

#[derive(Debug, Parser)]
#[command(name = "sumhess", version, about = "Sum-Hessian operator experiments")]
struct Args {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Flat JSON config with dotted keys.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Residuals of the symmetric-function identities.
    Identities(Common),
    /// Randomized falsification campaigns for the concavity inequalities.
    Falsify(Common),
    /// One Dirichlet solve.
    Solve(Common),
    /// Manufactured-solution convergence study.
    Mms(Common),
    /// Refinement table of the second-derivative estimate's quantity.
    Pogorelov(Common),
}

/// Command outcome: `pass == false` maps to exit code 1.
pub(crate) struct Outcome {
    pub pass: bool,
    pub summary: String,
}

/// Where a command writes and with which seed.
pub(crate) struct Ctx {
    pub out: PathBuf,
    pub seed: u64,
}

impl Ctx {
    pub fn write(&self, name: &str, contents: &[u8]) -> Result<()> {
        fs::write(self.out.join(name), contents)?;
        Ok(())
    }

    pub fn write_json(&self, name: &str, v: &Value) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }
}

fn common_defaults() -> Vec<(&'static str, Value)> {
    vec![("seed", json!(0)), ("output_dir", json!("."))]
}

pub fn defaults(cmd: Command) -> Vec<(&'static str, Value)> {
    let mut d = common_defaults();
    d.extend(match cmd {
        Command::Identities => identities::defaults(),
        Command::Falsify => falsify::defaults(),
        Command::Solve => pde::solve_defaults(),
        Command::Mms => pde::mms_defaults(),
        Command::Pogorelov => pde::pogorelov_defaults(),
    });
    d
}

/// Runs one command and returns its exit code.
pub fn run_command(cmd: Command, config_path: &Path, seed: Option<u64>, out: Option<&Path>) -> i32 {
    match execute(cmd, config_path, seed, out) {
        Ok(o) => {
            println!("{}", o.summary);
            if o.pass {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("sumhess: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) => 2,
        _ => 1,
    }
}

fn execute(cmd: Command, config_path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<Outcome> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", config_path.display())))?;
    let mut cfg = RunConfig::load(&text, defaults(cmd))?;
    if let Some(s) = seed {
        cfg.set("seed", json!(s));
    }
    let seed = cfg.u64("seed")?;
    let out = match out {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(cfg.str("output_dir")?),
    };
    fs::create_dir_all(&out).map_err(|e| Error::Usage(format!("cannot create {}: {e}", out.display())))?;
    // The location is not part of the experiment.
    cfg.set("output_dir", Value::Null);
    let ctx = Ctx { out, seed };
    let outcome = match cmd {
        Command::Identities => identities::run(&mut cfg, &ctx),
        Command::Falsify => falsify::run(&mut cfg, &ctx),
        Command::Solve => pde::run_solve(&mut cfg, &ctx),
        Command::Mms => pde::run_mms(&mut cfg, &ctx),
        Command::Pogorelov => pde::run_pogorelov(&mut cfg, &ctx),
    };
    // Resolved values (suggested parameters and the like) are known only now.
    ctx.write_json("config.resolved.json", &cfg.to_json())?;
    outcome
}

/// Full entry point over an argument list (including the program name).
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (cmd, c) = match args.command {
        Sub::Identities(c) => (Command::Identities, c),
        Sub::Falsify(c) => (Command::Falsify, c),
        Sub::Solve(c) => (Command::Solve, c),
        Sub::Mms(c) => (Command::Mms, c),
        Sub::Pogorelov(c) => (Command::Pogorelov, c),
    };
    run_command(cmd, &c.config, c.seed, c.out.as_deref())
}

/// Domain and precondition errors raised while building inputs from the
/// config are configuration mistakes.
pub(crate) fn as_usage(e: Error) -> Error {
    match e {
        Error::Domain(m) | Error::Precondition(m) => Error::Usage(m),
        other => other,
    }
}
