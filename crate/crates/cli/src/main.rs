use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dlab_cli::{execute, Command, ExperimentConfig, Format, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "dlab", version, about = "Dilation, torus and matrix-range experiments")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let cfg = ExperimentConfig::load(&cli.config)?;
    let report = execute(cli.command, &cfg, RunOptions { seed: cli.seed, tol: cli.tol })?;
    let output = cfg.output.clone().unwrap_or_default();
    let dir = cli.out.or(output.dir).unwrap_or_else(|| PathBuf::from("."));
    let format = match (cli.format, output.format) {
        (Some(f), _) => f,
        (None, Some(s)) => Format::parse(&s).ok_or_else(|| anyhow::anyhow!("unknown output format {s:?}"))?,
        (None, None) => Format::Json,
    };
    for path in report.write(&dir, format)? {
        eprintln!("wrote {}", path.display());
    }
    for l in &report.ledgers {
        for c in l.ledger.failures() {
            eprintln!("ledger failure: {} (claimed {}, measured {})", c.name, c.claimed, c.measured);
        }
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
