use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use stereo_bp_cli::args::{self, Cli, Command};
use stereo_bp_cli::commands;

fn run() -> anyhow::Result<()> {
    let argv = args::expand_config(std::env::args_os().collect())?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => {
            let text = e.to_string();
            let message: Vec<&str> = text
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            anyhow::bail!("{}", message.join(" ").trim_start_matches("error: "));
        }
    };
    match cli.command {
        Command::Match(args) => {
            let out = commands::run_match(&args)?;
            if let Some(report) = out.report {
                println!("{}", report.csv_line());
            }
        }
        Command::Eval(args) => println!("{}", commands::run_eval(&args)?.csv_line()),
        Command::Synth(args) => commands::run_synth(&args)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
