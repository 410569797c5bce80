mod args;
mod exit;
mod io;
mod run;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    match run::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = exit::classify(&err);
            eprintln!("error: {}", one_line(&err));
            ExitCode::from(kind as u8)
        }
    }
}

/// The error chain on one line. Causes that an outer message already quotes
/// are skipped.
fn one_line(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if parts.last().is_some_and(|p| p.ends_with(&text)) {
            continue;
        }
        parts.push(text);
    }
    parts.join(": ").replace('\n', " ")
}
