mod args;
mod commands;
mod config;
mod manifest;

use std::process::ExitCode;

use clap::Parser;
use ffd_core::ErrorCategory;

/// Maps the first library error in the chain to the exit-code contract;
/// anything else is treated as bad input.
fn exit_code(err: &anyhow::Error) -> u8 {
    let category = err.chain().find_map(|e| e.downcast_ref::<ffd_core::Error>()).map(|e| e.category());
    match category {
        Some(ErrorCategory::Shape) => 3,
        Some(ErrorCategory::Numerical) => 4,
        Some(ErrorCategory::Input) | None => 2,
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("FFD_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| ffd_core::Error::InvalidArgument(format!("FFD_THREADS must be a number, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = configure_threads()
        .and_then(|()| config::expand_args(std::env::args_os().collect()))
        .map_err(|e| (exit_code(&e), e));
    let argv = match result {
        Ok(argv) => argv,
        Err((code, e)) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(code);
        }
    };
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
