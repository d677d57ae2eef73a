use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use cdarec::args::{Cli, Command};
use cdarec::commands;
use cdarec::errors::CliResult;

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Train(args) => commands::cmd_train(args),
        Command::Evaluate(args) => commands::cmd_evaluate(args),
        Command::Predict(args) => commands::cmd_predict(args),
        Command::AnalyzeTransitions(args) => commands::cmd_analyze(args),
        Command::GenSynthetic(args) => commands::cmd_gen(args),
        Command::Gradcheck(args) => commands::cmd_gradcheck(args),
    }
}

/// Restore the default SIGPIPE disposition so that piping output into a
/// consumer that exits early (`cdarec predict ... | head`) ends the process
/// quietly instead of panicking on a failed stdout write.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are successful outcomes; everything else
            // clap rejects is a usage error.
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
