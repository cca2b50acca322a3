mod args;
mod commands;
mod failure;
mod provider;
mod settings;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::failure::{CmdResult, Failure};

fn init_threads(threads: Option<usize>) -> CmdResult {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(anyhow::Error::from)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    let file = settings::load(cli.global.config.as_deref())?;
    init_threads(cli.global.threads.or(file.threads))?;
    let g = &cli.global;
    match &cli.command {
        Command::BuildDataset(a) => commands::build::run_cmd(&file, g, a),
        Command::Synth(a) => commands::synth::run_cmd(&file, g, a),
        Command::Train(a) => commands::train::run_cmd(&file, g, a),
        Command::Eval(a) => commands::eval::run_cmd(&file, g, a),
        Command::Gradcheck(a) => commands::gradcheck::run_cmd(&file, g, a),
        Command::Simmap(a) => commands::simmap::run_cmd(&file, g, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            f.exit_code()
        }
    }
}
