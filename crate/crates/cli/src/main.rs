use std::process::ExitCode;

use clap::Parser;

mod cmd_eval;
mod cmd_generate;
mod cmd_serve;
mod settings;

use settings::Cli;

/// Domain failure: printed to stderr, exit status 1.
#[derive(Debug)]
pub struct Failure(pub String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("TONEBRIDGE_LOG").unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let result = match cli.command {
        settings::Command::Generate(args) => cmd_generate::run(args),
        settings::Command::Eval(args) => cmd_eval::run(args),
        settings::Command::Serve(args) => cmd_serve::serve(args),
        settings::Command::MockBackends(args) => cmd_serve::mock_backends(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
