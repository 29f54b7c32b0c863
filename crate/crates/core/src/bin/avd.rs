use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = match avd_core::cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match avd_core::cli::run(&cli) {
        Ok(report) => {
            println!("{}", report.summary);
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("avd {}: error: {e}", cli.command.name());
            ExitCode::FAILURE
        }
    }
}
