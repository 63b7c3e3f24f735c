use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use multifreq_sampling::cli::{self, Cli};

fn main() -> ExitCode {
    let args = Cli::parse();
    if let Err(e) = cli::configure_threads() {
        eprintln!("msm: {e}");
        return ExitCode::from(cli::exit_code(&e));
    }
    match cli::execute(&args) {
        Ok((text, code)) => {
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(text.as_bytes());
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("msm: {e}");
            ExitCode::from(cli::exit_code(&e))
        }
    }
}
