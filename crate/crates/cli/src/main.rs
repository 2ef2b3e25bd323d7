use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use cvmdi_cli::args::Cli;
use cvmdi_cli::config::Command;
use cvmdi_cli::{commands, dataset, execute, output, CliError, CliResult};

fn run() -> CliResult<()> {
    let cli = Cli::parse();
    let out_path = cli.out.clone();
    let (config, dump) = cli.resolve()?;
    let text = execute(&config)?;
    match &out_path {
        Some(path) => output::write_atomic(path, text.as_bytes())?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io("<stdout>", e))?,
    }
    if let (Some(path), Command::Simulate(c)) = (dump, &config.command) {
        let spec = commands::simulation_spec(c)?;
        let data = cvmdi::sample_dataset(&spec, 0)?;
        let mut buf = Vec::new();
        dataset::write_dataset(&mut buf, &data)?;
        output::write_atomic(&path, &buf)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cvmdi: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
