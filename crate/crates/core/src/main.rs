use std::process::ExitCode;

use clap::Parser;
use fedtune::cli::{execute, exit_code, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli, &mut std::io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fedtune: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
