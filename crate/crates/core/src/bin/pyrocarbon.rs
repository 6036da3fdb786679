use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use pyrocarbon::pipeline::{run, PipelineError, RunOptions};
use pyrocarbon::raster::{compute_index, read_grid, serialize_grid, Band, Bands, IndexKind};
use pyrocarbon::scenario::{has_errors, validate, Finding, Scenario, Stage};

/// Wildfire emissions and reversal-risk engine.
#[derive(Debug, Parser)]
#[command(name = "pyrocarbon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its JSON report.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated stages to run, e.g. `indices,detection,perimeters`.
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<Stage>>,
    },
    /// Check a scenario and print findings.
    Validate { scenario: PathBuf },
    /// Start the HTTP what-if service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        root: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
    /// Compute a spectral index grid from band grids.
    Index {
        #[arg(long)]
        kind: IndexKind,
        /// Band files as `band=path`, e.g. `nir=b8.asc red=b4.asc`.
        #[arg(long, num_args = 1.., value_parser = parse_band)]
        bands: Vec<(Band, PathBuf)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_band(s: &str) -> Result<(Band, PathBuf), String> {
    let (band, path) = s.split_once('=').ok_or_else(|| format!("expected band=path, got '{s}'"))?;
    Ok((band.parse()?, PathBuf::from(path)))
}

/// Failure classes mapped to exit codes 1 and 2.
enum Failure {
    Invalid(anyhow::Error),
    Execution(anyhow::Error),
}

fn print_findings(findings: &[Finding]) {
    for f in findings {
        eprintln!("{f}");
    }
}

fn open(path: &Path) -> Result<Scenario, Failure> {
    match Scenario::open(path) {
        Ok(Ok(s)) => Ok(s),
        Ok(Err(findings)) => {
            print_findings(&findings);
            Err(Failure::Invalid(anyhow::anyhow!("{} does not match the scenario schema", path.display())))
        }
        Err(e) => Err(Failure::Invalid(e.into())),
    }
}

fn write_out(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run {
            scenario,
            out,
            seed,
            stages,
        } => {
            let s = open(&scenario)?;
            let opts = RunOptions {
                seed,
                stages: stages.map(|v| v.into_iter().collect::<BTreeSet<_>>()),
            };
            let report = run(&s, &opts).map_err(|e| match e {
                PipelineError::Validation(f) => {
                    print_findings(&f);
                    Failure::Invalid(anyhow::anyhow!("scenario is invalid"))
                }
                PipelineError::Stage(e) => Failure::Execution(e.into()),
            })?;
            for w in &report.warnings {
                eprintln!("{w}");
            }
            write_out(out.as_deref(), &report.to_json()).map_err(Failure::Execution)
        }
        Command::Validate { scenario } => {
            let s = open(&scenario)?;
            let findings = validate(&s);
            print_findings(&findings);
            if has_errors(&findings) {
                return Err(Failure::Invalid(anyhow::anyhow!("scenario is invalid")));
            }
            println!("ok: {} warning(s)", findings.len());
            Ok(())
        }
        Command::Serve { port, root, host } => {
            if !root.is_dir() {
                return Err(Failure::Invalid(anyhow::anyhow!("root {} is not a directory", root.display())));
            }
            let addr = SocketAddr::new(host, port);
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Execution(e.into()))?;
            log::info!("serving {} on http://{addr}", root.display());
            rt.block_on(pyrocarbon::service::serve(addr, root))
                .map_err(|e| Failure::Execution(e.into()))
        }
        Command::Index { kind, bands, out } => {
            let mut grids = Bands::new();
            for (band, path) in bands {
                let g = read_grid(&path).map_err(|e| Failure::Invalid(e.into()))?;
                grids.insert(band, g);
            }
            let index = compute_index(kind, &grids).map_err(|e| Failure::Invalid(e.into()))?;
            write_out(out.as_deref(), &serialize_grid(&index)).map_err(Failure::Execution)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Execution(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
