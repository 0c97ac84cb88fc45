use std::process::ExitCode;

use clap::Parser;
use impactfit_cli::args::Cli;

fn main() -> ExitCode {
    let code = impactfit_cli::run(Cli::parse(), &mut std::io::stdout().lock());
    ExitCode::from(code)
}
