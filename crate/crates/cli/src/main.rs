//! `mskit`: batch harness around the mskit library.

mod bench;
mod compare;
mod config;
mod dos_cmd;
mod output;
mod solve;
mod verify;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mskit::cluster::format_cluster;

use config::{Run, RunConfig};
use output::{resolve_out_dir, OutDir, Provenance};

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, unreadable input or unwritable output.
    Config(String),
    /// Numerical failure that stopped the whole command.
    Numerical(String),
    /// An oracle or comparison check failed.
    Verification(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

/// How a command that ran to the end went.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Complete,
    /// Some energy points failed; the rest were written.
    Partial,
}

#[derive(Parser)]
#[command(name = "mskit", version, about = "Real-space multiple-scattering solver harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads for the energy grid.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Output directory (falls back to the config, then $MSKIT_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured cluster in the cluster file format.
    GenCluster(RunArgs),
    /// Scattering path operators over the energy grid with JSON reports.
    Solve(RunArgs),
    /// Site-resolved local DOS over the energy grid.
    Dos(RunArgs),
    /// Wall time and operation counts per mode.
    Bench(RunArgs),
    /// Run the oracle suite and print a pass/fail table.
    Verify {
        /// Replace the default residual tolerances.
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Diff two output directories.
    Compare {
        left: PathBuf,
        right: PathBuf,
    },
}

struct Prepared {
    run: Run,
    out: OutDir,
    threads: usize,
}

fn prepare(args: &RunArgs) -> Result<Prepared, CliError> {
    if args.threads == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    let (config, base) = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => (RunConfig::default(), PathBuf::from(".")),
    };
    let run = config.validate(&base)?;
    let dir = resolve_out_dir(args.out.as_deref(), run.config.output.as_deref());
    let out = OutDir::create(dir, Provenance::new(&run.hash))?;
    Ok(Prepared {
        run,
        out,
        threads: args.threads,
    })
}

/// Applies `f` to every grid point, in parallel when `threads > 1`; results
/// keep grid order.
pub fn par_map<T: Sync, R: Send>(threads: usize, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Result<Vec<R>, CliError> {
    if threads <= 1 {
        return Ok(items.iter().map(f).collect());
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

fn gen_cluster(p: &Prepared) -> Result<Status, CliError> {
    let path = p.out.write_text("cluster.txt", |w, c| {
        use std::io::Write;
        writeln!(w, "{c}")?;
        write!(w, "{}", format_cluster(&p.run.system.cluster))
    })?;
    println!(
        "wrote {} ({} sites, {} species)",
        path.display(),
        p.run.system.cluster.n_sites(),
        p.run.system.cluster.species_table().len()
    );
    Ok(Status::Complete)
}

fn dispatch(cli: Cli) -> Result<Status, CliError> {
    match cli.command {
        Command::GenCluster(a) => gen_cluster(&prepare(&a)?),
        Command::Solve(a) => {
            let p = prepare(&a)?;
            solve::run(&p.run, &p.out, p.threads)
        }
        Command::Dos(a) => {
            let p = prepare(&a)?;
            dos_cmd::run(&p.run, &p.out, p.threads)
        }
        Command::Bench(a) => {
            let p = prepare(&a)?;
            bench::run(&p.run, &p.out)
        }
        Command::Verify { tolerance, threads } => verify::run(tolerance, threads),
        Command::Compare { left, right } => compare::run(Path::new(&left), Path::new(&right)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(Status::Complete) => ExitCode::SUCCESS,
        Ok(Status::Partial) => {
            eprintln!("some energy points failed; see the failures in the reports");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("mskit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
