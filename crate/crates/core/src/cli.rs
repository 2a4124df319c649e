//! The `speccov` command line. Exit codes: 0 success, 2 usage, parse or
//! config errors, 3 estimator or runtime failures.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::estimators::{estimate, EstimatorOptions, Method};
use crate::io::{read_matrix, write_csv, write_matrix, Format};
use crate::linalg::{DataMatrix, MeanMode, SymmetricMatrix};
use crate::par;
use crate::rmt::RmtConfig;
use crate::simulate::{self, config_hash, Experiment, RunManifest, SimulationConfig, Stopwatch};
use crate::selftest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "speccov", version, about = "Covariance estimation by eigenvalue correction")]
struct Cli {
    /// Worker threads; 1 gives the serial reference schedule.
    #[arg(long, global = true, env = "SPECCOV_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate a covariance matrix from a data file (rows are observations).
    Estimate(EstimateArgs),
    /// Run a simulation described by a JSON config file.
    Simulate(SimulateArgs),
    /// Run fast built-in consistency checks.
    Selftest(SelftestArgs),
    /// Time estimators single-threaded on block-spectrum data.
    Bench(BenchArgs),
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Data matrix, CSV or binary.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Seed for K-fold assignment.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Subtract column means before estimating.
    #[arg(long)]
    centered: bool,
    /// Population covariance, required by the oracle methods.
    #[arg(long)]
    population: Option<PathBuf>,
    /// Format of the covariance output.
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: Format,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also print the covariance as CSV on stdout.
    #[arg(long)]
    stdout: bool,
    /// Numerical overrides, e.g. `--set rmt.fp_tol=1e-9`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Config overrides applied before validation, e.g. `--set reps=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Also print the CSV on stdout.
    #[arg(long)]
    stdout: bool,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    /// Machine-readable report on stdout.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [50usize, 100, 200])]
    p: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_values = ["loo-cvc", "10f-cvc", "iso-10f-cvc", "nls"])]
    estimators: Vec<Method>,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Parse(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: String) -> Failure {
    Failure { code: EXIT_USAGE, message }
}

fn read_input(path: &Path) -> Result<nalgebra::DMatrix<f64>, Failure> {
    read_matrix(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure { code: EXIT_RUNTIME, message: format!("{}: {e}", dir.display()) })
}

fn write_manifest(dir: &Path, stem: &str, manifest: &RunManifest) -> Result<PathBuf, Failure> {
    let path = dir.join(format!("{stem}.manifest.json"));
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Failure { code: EXIT_RUNTIME, message: e.to_string() })?;
    fs::write(&path, text + "\n").map_err(Error::from)?;
    Ok(path)
}

fn rmt_with_overrides(overrides: &[String]) -> Result<RmtConfig, Failure> {
    let mut root = serde_json::json!({ "rmt": serde_json::to_value(RmtConfig::default()).expect("serializable") });
    for o in overrides {
        if !o.starts_with("rmt.") {
            return Err(usage(format!("override `{o}`: only rmt.* keys apply to estimate")));
        }
    }
    simulate::apply_overrides(&mut root, overrides)?;
    let rmt: RmtConfig = serde_json::from_value(root["rmt"].take()).map_err(|e| usage(format!("rmt: {e}")))?;
    rmt.validate()?;
    Ok(rmt)
}

fn cmd_estimate(a: &EstimateArgs) -> Result<(), Failure> {
    let watch = Stopwatch::start();
    let raw = fs::read(&a.input).map_err(|e| usage(format!("{}: {e}", a.input.display())))?;
    let values = read_input(&a.input)?;
    let mode = if a.centered { MeanMode::Centered } else { MeanMode::ZeroMean };
    let x = DataMatrix::new(values, mode).map_err(|e| usage(format!("{}: {e}", a.input.display())))?;
    let population = match &a.population {
        Some(p) => Some(SymmetricMatrix::new(read_input(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let opts = EstimatorOptions { folds: a.folds, seed: a.seed, population, rmt: rmt_with_overrides(&a.overrides)? };
    let est = estimate(&x, a.method, &opts)?;

    create_dir(&a.out)?;
    let cov_path = a.out.join(format!("covariance.{}", a.format.extension()));
    write_matrix(&cov_path, est.matrix.as_matrix(), a.format)?;
    let spec = nalgebra::DMatrix::from_column_slice(est.corrected_spectrum.len(), 1, &est.corrected_spectrum);
    let spec_path = a.out.join("spectrum.csv");
    write_matrix(&spec_path, &spec, Format::Csv)?;
    if a.stdout {
        let mut buf = Vec::new();
        write_csv(&mut buf, est.matrix.as_matrix())?;
        std::io::stdout().write_all(&buf).map_err(Error::from)?;
    }
    let mut hashed = vec![format!("method={}", a.method), format!("seed={}", a.seed), format!("folds={}", a.folds)];
    hashed.extend(a.overrides.iter().cloned());
    let outputs = vec![cov_path.display().to_string(), spec_path.display().to_string()];
    let manifest = watch.finish("estimate", None, config_hash(&raw, &hashed), a.seed, outputs);
    write_manifest(&a.out, "estimate", &manifest)?;
    eprintln!("wrote {} and {}", cov_path.display(), spec_path.display());
    Ok(())
}

fn run_and_write(
    command: &str,
    cfg: &SimulationConfig,
    hash: String,
    out: &Path,
    to_stdout: bool,
) -> Result<(), Failure> {
    let watch = Stopwatch::start();
    let table = simulate::run(cfg)?;
    let csv = table.to_csv();
    create_dir(out)?;
    let name = cfg.output_name();
    let path = out.join(&name);
    fs::write(&path, &csv).map_err(Error::from)?;
    if to_stdout {
        print!("{csv}");
    }
    let stem = Path::new(&name).file_stem().map_or_else(|| name.clone(), |s| s.to_string_lossy().into_owned());
    let manifest = watch.finish(
        command,
        Some(cfg.experiment.name()),
        hash,
        cfg.experiment.seed(),
        vec![path.display().to_string()],
    );
    let mpath = write_manifest(out, &stem, &manifest)?;
    eprintln!("wrote {} and {}", path.display(), mpath.display());
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let bytes = fs::read(&a.config).map_err(|e| usage(format!("{}: {e}", a.config.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| usage(format!("{}: not UTF-8", a.config.display())))?;
    let cfg = SimulationConfig::parse(&text, &a.overrides).map_err(|e| usage(format!("{}: {e}", a.config.display())))?;
    run_and_write("simulate", &cfg, config_hash(&bytes, &a.overrides), &a.out, a.stdout)
}

fn cmd_bench(a: &BenchArgs) -> Result<(), Failure> {
    let rc = simulate::RuntimeConfig {
        p_values: a.p.clone(),
        estimators: a.estimators.clone(),
        reps: a.reps,
        seed: a.seed,
        ..Default::default()
    };
    rc.validate()?;
    let cfg = SimulationConfig { experiment: Experiment::Runtime(rc), output: None, rmt: RmtConfig::default() };
    let described = format!("{:?}", cfg.experiment);
    run_and_write("bench", &cfg, config_hash(described.as_bytes(), &[]), &a.out, true)
}

fn cmd_selftest(a: &SelftestArgs) -> Result<(), Failure> {
    let report = selftest::run();
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    } else {
        eprint!("{}", report.to_text());
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure { code: EXIT_RUNTIME, message: format!("failed checks: {}", report.failed().join(", ")) })
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if cli.threads == Some(0) {
        eprintln!("error: --threads must be >= 1");
        return EXIT_USAGE;
    }
    let result = par::with_threads(cli.threads, || match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Selftest(a) => cmd_selftest(a),
        Command::Bench(a) => cmd_bench(a),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
