//! `magorb`: closed magnetic geodesics from a JSON run config.
//!
//! Exit codes: 0 success, 2 non-convergence, 3 invalid config or input,
//! 4 internal error. Logging is controlled by `MAGORB_LOG`.

mod commands;
mod config;
mod output;

use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, ValueEnum};

use commands::{EXIT_INTERNAL, EXIT_INVALID};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Closed orbit at one energy: mountain pass for the trivial class, minimization otherwise.
    Orbit,
    /// Mountain-pass levels over an energy range.
    Sweep,
    /// Bracket for the critical value.
    CriticalValue,
    /// Action potential between two points.
    Potential,
    /// Closure check of a stored loop.
    Verify,
    /// Raw integration of the magnetic flow.
    Geodesic,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_possible_value().expect("no skipped variants");
        f.write_str(v.get_name())
    }
}

#[derive(Debug, Parser)]
#[command(name = "magorb", version, about = "Closed orbits of magnetic flows on model surfaces")]
struct Cli {
    command: Command,
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

const DEFAULT_OUT: &str = "magorb_out";

fn execute(cli: &Cli) -> u8 {
    let run = match config::load(&cli.config, cli.command) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: invalid configuration: {e:#}");
            return EXIT_INVALID;
        }
    };
    let target = cli
        .out
        .clone()
        .or_else(|| run.config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    log::info!("{} with {:?}, output to {}", cli.command, run.config.model, target.display());
    let outcome = match commands::dispatch(&run, cli.command) {
        Ok(o) => o,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            return f.code;
        }
    };
    let written = output::Staging::new(&target).and_then(|st| {
        for (rel, contents) in &outcome.files {
            st.write(rel, contents)?;
        }
        st.commit()
    });
    if let Err(e) = written {
        eprintln!("error: writing {}: {e}", target.display());
        return EXIT_INTERNAL;
    }
    log::info!("wrote {} files, exit code {}", outcome.files.len(), outcome.code);
    outcome.code
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MAGORB_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_INVALID),
            };
        }
    };
    match panic::catch_unwind(AssertUnwindSafe(|| execute(&cli))) {
        Ok(code) => ExitCode::from(code),
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
