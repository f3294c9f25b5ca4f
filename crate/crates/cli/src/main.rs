use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = aslab::Cli::parse();
    match aslab::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(aslab::exit_code(&e) as u8)
        }
    }
}
