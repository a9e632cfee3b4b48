use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use nehari_cli::{parse_config, run, Command, EXIT_USAGE};

/// Least-energy solutions and level estimates for coupled critical systems on a ball in R⁴.
#[derive(Parser)]
#[command(name = "nehari-critical", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `solver.seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn fail(msg: impl std::fmt::Display, code: i32) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return fail(format!("{}: {e}", args.config.display()), EXIT_USAGE),
    };
    let mut parsed = match parse_config(&text) {
        Ok(p) => p,
        Err(e) => return fail(format!("{}: {e}", args.config.display()), EXIT_USAGE),
    };
    if let Some(seed) = args.seed {
        parsed.config.solver.seed = seed;
        parsed.defaulted.retain(|k| k != "solver.seed");
    }
    let out = args.out.unwrap_or_else(|| PathBuf::from(&parsed.config.output.dir));
    match run(args.command, &parsed, &out) {
        Ok(report) => {
            if let Some(err) = &report.status.error {
                eprintln!("error: {err}");
            }
            println!("{}", out.join("report.json").display());
            ExitCode::from(report.status.exit_code as u8)
        }
        Err(e) => fail(&e, e.exit_code()),
    }
}
