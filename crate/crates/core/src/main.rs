use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sparsyfed::config::parse_config;
use sparsyfed::experiment::run_experiment;

#[derive(Parser)]
#[command(name = "sparsyfed", version, about = "Sparse federated training simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of an experiment sweep.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads shared by runs and clients.
        #[arg(long)]
        jobs: Option<usize>,
        /// Validate and print the run matrix without executing.
        #[arg(long)]
        dry_run: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let Command::Simulate {
        config,
        out,
        jobs,
        dry_run,
    } = cli.command;

    let spec = match parse_config(&config) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let out = out.unwrap_or_else(|| spec.output.dir.clone());
    if dry_run {
        let cells = spec.cells();
        let mut stdout = std::io::stdout().lock();
        let _ = writeln!(stdout, "{} run(s) into {}", cells.len(), out.display());
        for cell in &cells {
            if writeln!(stdout, "{}", cell.dir_name()).is_err() {
                break;
            }
        }
        return ExitCode::SUCCESS;
    }
    match run_experiment(&spec, &out, jobs) {
        Ok(outcome) if outcome.failures() == 0 => {
            println!("{} run(s) written to {}", outcome.runs.len(), out.display());
            ExitCode::SUCCESS
        }
        Ok(outcome) => {
            eprintln!("{} of {} run(s) failed", outcome.failures(), outcome.runs.len());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
