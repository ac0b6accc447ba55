use std::process::ExitCode;

use clap::Parser;
use rhpt_cli::{run, Cli, CliError};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs.filter(|&j| j > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("warning: could not size thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit(&e)
        }
    }
}

fn exit(e: &CliError) -> ExitCode {
    ExitCode::from(e.exit_code() as u8)
}
