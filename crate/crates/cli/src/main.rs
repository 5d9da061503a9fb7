use std::process::ExitCode;

use chargelot_cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chargelot: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
