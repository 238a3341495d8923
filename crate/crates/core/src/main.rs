use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = artifact_repair::cli::Cli::parse();
    artifact_repair::cli::init_logging(cli.verbose);
    match artifact_repair::cli::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
