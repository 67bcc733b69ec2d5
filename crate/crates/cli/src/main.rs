use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = retention_cli::Cli::parse();
    match retention_cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
