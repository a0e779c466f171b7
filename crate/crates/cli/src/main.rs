//! `feshbach` command-line tool.
//!
//! Exit status: 0 when every check passes, 1 on a property failure, 2 on a
//! usage, parse or I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use feshbach::harness::{
    check_instance, generate_valid, reduce_instance, run_fuzz, scan_instance, timed, FuzzConfig,
    HarnessError,
};
use feshbach::instance::{InstanceSpec, PartitionKind};
use feshbach::io::{read_instance, read_instance_spec, write_instance, IoError};
use feshbach::isospectral::Grid;
use feshbach::{Complex64, Tolerances};

#[derive(Parser)]
#[command(name = "feshbach", version, about = "Smooth Feshbach-Schur map: generate, check, scan and reduce")]
struct Cli {
    #[command(flatten)]
    tol: TolArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TolArgs {
    /// Relative singular-value cutoff for rank decisions.
    #[arg(long = "rank-tol", global = true, default_value_t = 1e-10)]
    rank_tol: f64,
    /// Relative residual acceptance.
    #[arg(long = "res-tol", global = true, default_value_t = 1e-9)]
    res_tol: f64,
    /// Neumann series truncation threshold.
    #[arg(long = "neumann-tol", global = true, default_value_t = 1e-12)]
    neumann_tol: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded random instance directory.
    Gen(GenArgs),
    /// Check the pair conditions, identities, inverse formulas and kernels of an instance.
    Check(CheckArgs),
    /// Scan a spectral parameter grid for eigenvalues through the reduced operator.
    Scan(ScanArgs),
    /// Iterated reduction of an instance.
    Reduce(ReduceArgs),
    /// Run the property suite on many seeded random instances.
    Fuzz(FuzzArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Instance spec JSON; the other spec flags are ignored when given.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long, default_value = "smooth")]
    kind: PartitionKind,
    /// Norm of W relative to the norm of T.
    #[arg(long, default_value_t = 0.1)]
    scale: f64,
    #[arg(long, default_value_t = 0)]
    kernel_dim: usize,
    /// Cutoff window `a,b` or `a,b,c`.
    #[arg(long, value_delimiter = ',')]
    cutoff: Vec<f64>,
    /// Generator eigenvalues as `re` or `re:im`, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_complex)]
    spectrum: Vec<Complex64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    /// Instance directory.
    instance: PathBuf,
    /// Write the JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Include wall-clock timing in the JSON report.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ScanArgs {
    instance: PathBuf,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    re_min: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
    re_max: f64,
    #[arg(long, default_value_t = 101)]
    re_count: usize,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    im_min: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    im_max: f64,
    #[arg(long, default_value_t = 1)]
    im_count: usize,
    /// Write the CSV table here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ReduceArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 1)]
    stages: usize,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Dimension range `min..max` (inclusive).
    #[arg(long, default_value = "2..20", value_parser = parse_range)]
    dims: (usize, usize),
    #[arg(long, value_delimiter = ',', default_value = "sharp,smooth,nonselfadjoint")]
    kinds: Vec<PartitionKind>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.45")]
    scales: Vec<f64>,
    /// Smallest planted kernel dimension.
    #[arg(long, default_value_t = 0)]
    kernel_dim_min: usize,
    /// Largest planted kernel dimension.
    #[arg(long, default_value_t = 0)]
    kernel_dim_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    quiet: bool,
}

fn parse_complex(s: &str) -> Result<Complex64, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    match s.split_once(':') {
        Some((re, im)) => Ok(Complex64::new(num(re)?, num(im)?)),
        None => Ok(Complex64::new(num(s)?, 0.0)),
    }
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected `min..max`, got `{s}`"))?;
    let a: usize = a.trim().parse().map_err(|e| format!("`{a}`: {e}"))?;
    let b: usize = b.trim().trim_start_matches('=').parse().map_err(|e| format!("`{b}`: {e}"))?;
    Ok((a, b))
}

enum Failure {
    Usage(String),
    Property,
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Io(_) | HarnessError::Instance(_) | HarnessError::InvalidConfig(_) => {
                Failure::Usage(e.to_string())
            }
            HarnessError::Partition(_) | HarnessError::Iso(_) => {
                eprintln!("error: {e}");
                Failure::Property
            }
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn verdict(pass: bool) -> Result<(), Failure> {
    if pass {
        Ok(())
    } else {
        Err(Failure::Property)
    }
}

fn gen(args: GenArgs, tol: &Tolerances) -> Result<(), Failure> {
    let spec = match &args.spec {
        Some(path) => read_instance_spec(path)?,
        None => InstanceSpec {
            dim: args.dim,
            partition_kind: args.kind,
            generator_spectrum: args.spectrum,
            cutoff_params: args.cutoff,
            perturbation_scale: args.scale,
            kernel_dim: args.kernel_dim,
            seed: args.seed,
        },
    };
    let (inst, _, regenerations) = generate_valid(&spec, tol)?;
    if regenerations > 0 {
        eprintln!(
            "seed {} gave an invalid pair; wrote seed {} instead",
            spec.seed, inst.spec.seed
        );
    }
    write_instance(&args.out, &inst)?;
    println!("wrote {} (dimension {}, {})", args.out.display(), inst.spec.dim, inst.spec.partition_kind);
    Ok(())
}

fn check(args: CheckArgs, tol: &Tolerances) -> Result<(), Failure> {
    let files = read_instance(&args.instance)?;
    let (mut report, timing) = timed(args.timing, || check_instance(&files, tol));
    report.timing = timing;
    if !args.quiet {
        print!("{report}");
    }
    if let Some(path) = &args.json {
        write_file(path, &report.to_json())?;
    }
    verdict(report.summary.pass)
}

fn scan(args: ScanArgs, tol: &Tolerances) -> Result<(), Failure> {
    let files = read_instance(&args.instance)?;
    let grid = Grid::new(args.re_min, args.re_max, args.re_count, args.im_min, args.im_max, args.im_count);
    if grid.is_empty() {
        return Err(Failure::Usage("spectral grid is empty".into()));
    }
    let report = scan_instance(&files, &grid, tol)?;
    match &args.out {
        Some(path) => write_file(path, &report.to_csv())?,
        None if args.json.is_none() => print!("{}", report.to_csv()),
        None => {}
    }
    if let Some(path) = &args.json {
        write_file(path, &report.to_json())?;
    }
    if !args.quiet {
        eprint!("{report}");
    }
    verdict(report.summary.pass)
}

fn reduce(args: ReduceArgs, tol: &Tolerances) -> Result<(), Failure> {
    let files = read_instance(&args.instance)?;
    let report = reduce_instance(&files, args.stages, tol)?;
    if !args.quiet {
        print!("{report}");
    }
    if let Some(path) = &args.json {
        write_file(path, &report.to_json())?;
    }
    verdict(report.summary.pass)
}

fn fuzz(args: FuzzArgs, tol: &Tolerances) -> Result<(), Failure> {
    let config = FuzzConfig {
        trials: args.trials,
        dim_min: args.dims.0,
        dim_max: args.dims.1,
        kinds: args.kinds,
        scales: args.scales,
        kernel_dim_min: args.kernel_dim_min,
        kernel_dim_max: args.kernel_dim_max,
        seed: args.seed,
    };
    let (report, timing) = timed(args.timing, || run_fuzz(&config, tol));
    let mut report = report?;
    report.timing = timing;
    if !args.quiet {
        print!("{report}");
    }
    if let Some(path) = &args.json {
        write_file(path, &report.to_json())?;
    }
    verdict(report.summary.pass)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let tol = Tolerances::new(cli.tol.rank_tol, cli.tol.res_tol, cli.tol.neumann_tol)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    match cli.command {
        Command::Gen(a) => gen(a, &tol),
        Command::Check(a) => check(a, &tol),
        Command::Scan(a) => scan(a, &tol),
        Command::Reduce(a) => reduce(a, &tol),
        Command::Fuzz(a) => fuzz(a, &tol),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Property) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
