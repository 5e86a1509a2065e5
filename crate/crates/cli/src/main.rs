mod args;
mod commands;
mod failure;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, ReplayArgs};
use failure::Failure;

fn dispatch(cli: &Cli, args: &[String]) -> Result<(), Failure> {
    match &cli.command {
        Command::Analyze(a) => commands::analyze(a, args),
        Command::Simulate(a) => commands::simulate(a, args),
        Command::Run(a) => commands::run(a, args),
        Command::Train(a) => commands::train(a, args),
        Command::Bench(a) => commands::bench(a, args),
        Command::Replay(a) => replay(a),
    }
}

/// Re-parses the recorded arguments after checking that the inputs are
/// unchanged.
fn replay(a: &ReplayArgs) -> Result<(), Failure> {
    let m = manifest::read_manifest(&a.manifest)?;
    for (path, hash) in &m.input_hashes {
        let now = manifest::sha256_file(std::path::Path::new(path))?;
        if &now != hash {
            return Err(Failure::Usage(format!("input {path} changed since the manifest was written")));
        }
    }
    let mut argv = vec!["pipevid".to_string(), m.command.clone()];
    argv.extend(m.args.iter().cloned());
    if let Some(out) = &a.out.out {
        argv.push("--out".into());
        argv.push(out.display().to_string());
    }
    if a.out.force {
        argv.push("--force".into());
    }
    let cli = Cli::try_parse_from(&argv).map_err(|e| Failure::Usage(e.to_string()))?;
    dispatch(&cli, &m.args)
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&raw) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    // Everything after the subcommand name, for the run manifest.
    let args = manifest::strip_output_flags(raw.get(2..).unwrap_or_default());
    match dispatch(&cli, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
