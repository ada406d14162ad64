use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nefem::driver::{self, DriverError};

/// Space-time stabilized compressible flow solver with NURBS-enhanced
/// boundary elements.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// March a case to steady state and write its outputs.
    Run { config: PathBuf },
    /// Validate a mesh against its wall curves.
    CheckMesh {
        mesh: PathBuf,
        curves: PathBuf,
        /// Boundary tag to curve pairing `TAG:CURVE` (default: tag k uses curve k).
        #[arg(long = "wall", value_parser = parse_pair)]
        walls: Vec<(u32, u32)>,
    },
    /// Print n + 1 uniform samples of a curve as CSV.
    SampleCurve { curves: PathBuf, id: u32, n: usize },
    /// Run a case on several grids in NEFEM and SFEM mode.
    Study {
        config: PathBuf,
        #[arg(required = true)]
        grids: Vec<PathBuf>,
    },
}

fn parse_pair(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected TAG:CURVE, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<u32>().map_err(|_| format!("bad number `{v}`"));
    Ok((parse(a)?, parse(b)?))
}

fn configure_threads() -> Result<(), DriverError> {
    let Ok(value) = std::env::var("NEFEM_THREADS") else { return Ok(()) };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| DriverError::Usage(format!("NEFEM_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| DriverError::Usage(format!("cannot configure {n} threads: {e}")))
}

fn execute(cli: Cli) -> Result<(), DriverError> {
    configure_threads()?;
    match cli.command {
        Command::Run { config } => {
            let out = driver::run(&config)?;
            println!("slabs {} steady {} C_D {}", out.summary.slabs, out.summary.steady, out.summary.cd);
        }
        Command::CheckMesh { mesh, curves, walls } => {
            let walls = if walls.is_empty() { None } else { Some(walls.into_iter().collect::<BTreeMap<_, _>>()) };
            let report = driver::check_mesh(&mesh, &curves, walls)?;
            print!("{}", report.to_text());
            if !report.passed() {
                return Err(DriverError::Usage(format!("{} failed validation", mesh.display())));
            }
        }
        Command::SampleCurve { curves, id, n } => print!("{}", driver::sample_curve(&curves, id, n)?),
        Command::Study { config, grids } => {
            for r in driver::convergence_study(&config, &grids)? {
                println!("{} {} elements {} C_D {} error {:e}", r.grid, r.mode, r.elements, r.cd, r.relative_error);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
