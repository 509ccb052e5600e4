use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use poromix::cli::{resolve_jobs, run, Command, StudyConfig, COMMAND_LINE, JOBS_ENV};

/// Mixed finite-element poroelasticity solver and verification driver.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// Config file with one `key = value` per line.
    #[arg(long)]
    config: Option<PathBuf>,
    /// solve, convergence, sweep or energy-test; overrides the config.
    #[arg(long)]
    command: Option<Command>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
}

fn load(args: &Args) -> poromix::Result<StudyConfig> {
    let mut cfg = StudyConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| poromix::Error::Io(format!("{}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            cfg.apply_line(line, i + 1)?;
        }
    }
    for s in &args.set {
        cfg.apply_line(s, COMMAND_LINE)?;
    }
    if let Some(c) = args.command {
        cfg.command = c;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if args.print_config {
        print!("{}", cfg.serialize());
        return ExitCode::SUCCESS;
    }
    let jobs = resolve_jobs(&cfg, std::env::var(JOBS_ENV).ok().as_deref());
    let stdout = std::io::stdout();
    let mut log = stdout.lock();
    match run(&cfg, jobs, &mut log) {
        Ok(summary) => {
            for f in &summary.files {
                let _ = writeln!(log, "wrote {}", f.display());
            }
            if summary.success() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
