//! `jumpflow`: run sampler sweeps, print time grids, run the invariant suite.

mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jumpflow::check::run_checks;
use jumpflow::eval::{sweep, write_csv};
use jumpflow::grid::{build_grid, GridKind};
use jumpflow::TimeSchedule;

use config::RunConfig;

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "jumpflow",
    version,
    about = "Samplers and benchmarks for discrete flow models"
)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output path; overrides the config's `out` key.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a sweep described by a config file and write the CSV.
    Sweep {
        config: PathBuf,
        /// Write 0 in the wall_seconds column.
        #[arg(long)]
        no_timing: bool,
    },
    /// Print the points of a time grid, one per line.
    Grid {
        #[arg(long = "K")]
        k: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value = "linear")]
        schedule: TimeSchedule,
        #[arg(long, default_value = "uniform")]
        kind: GridKind,
    },
    /// Run the built-in invariant suite.
    Check,
}

fn run_sweep(
    config_path: PathBuf,
    out: Option<PathBuf>,
    no_timing: bool,
) -> Result<(), (u8, String)> {
    let usage = |e: config::ConfigError| (EXIT_USAGE, e.to_string());
    let mut config = RunConfig::load(&config_path).map_err(usage)?;
    if no_timing {
        config.timing = false;
    }
    let out = out.or_else(|| config.out.clone()).ok_or_else(|| {
        (
            EXIT_USAGE,
            "config key `out`: missing (or pass --out)".to_string(),
        )
    })?;
    let sweep_config = config.build().map_err(usage)?;
    let records = sweep(&sweep_config).map_err(|e| (EXIT_FAILURE, e.to_string()))?;

    let io_err = |e: io::Error| (EXIT_FAILURE, format!("{}: {e}", out.display()));
    let file = File::create(&out).map_err(io_err)?;
    write_csv(&records, BufWriter::new(file)).map_err(|e| (EXIT_FAILURE, e.to_string()))?;

    let stdout = io::stdout();
    let mut lock = stdout.lock();
    for r in &records {
        let _ = writeln!(
            lock,
            "{} K={} seed={} tv={:.5} nfe={:.3} wall={:.3}s",
            r.sampler, r.k, r.seed, r.tv, r.nfe_mean, r.wall_seconds
        );
    }
    Ok(())
}

fn run_grid(
    k: usize,
    delta: f64,
    schedule: TimeSchedule,
    kind: GridKind,
) -> Result<(), (u8, String)> {
    let grid = build_grid(kind, schedule, k, delta).map_err(|e| (EXIT_USAGE, e.to_string()))?;
    let mut text = String::new();
    for t in grid.points() {
        text.push_str(&format!("{t}\n"));
    }
    print!("{text}");
    Ok(())
}

fn run_check() -> Result<(), (u8, String)> {
    let results = run_checks();
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        Ok(())
    } else {
        Err((EXIT_FAILURE, format!("{failed} check(s) failed")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    }
    let result = match cli.command {
        Command::Sweep { config, no_timing } => run_sweep(config, cli.out, no_timing),
        Command::Grid {
            k,
            delta,
            schedule,
            kind,
        } => run_grid(k, delta, schedule, kind),
        Command::Check => run_check(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
