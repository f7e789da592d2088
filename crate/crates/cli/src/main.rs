use std::process::ExitCode;

use clap::Parser;

use ccgan_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match ccgan_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ccgan_cli::exit_code(&e))
        }
    }
}
