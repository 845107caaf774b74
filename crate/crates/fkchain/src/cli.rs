//! Argument parsing and the process-level driver: run a command, write its artifacts,
//! map the outcome to an exit code.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fkchain_core::spectral::Exponent;
use serde::Serialize;

use crate::commands::{self, Output};
use crate::error::{CliError, CliResult};
use crate::format::to_json;
use crate::parallel::init_threads;

#[derive(Parser, Debug)]
#[command(
    name = "fkchain",
    version,
    about = "Feynman-Kac semigroups, gauges and Girsanov transforms on symmetric Markov chains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Directory for report.json, table.csv and meta.json. Without it the report goes to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build or validate a model file.
    Model {
        #[command(subcommand)]
        cmd: ModelCmd,
    },
    /// Kato-class diagnostics of a measure.
    Kato {
        #[command(subcommand)]
        cmd: KatoCmd,
    },
    /// Gauge function and Feynman-Kac semigroup.
    Fk {
        #[command(subcommand)]
        cmd: FkCmd,
    },
    /// Girsanov transform checks.
    Girsanov {
        #[command(subcommand)]
        cmd: GirsanovCmd,
    },
    /// Spectral bounds and truncation sweeps.
    Spectral {
        #[command(subcommand)]
        cmd: SpectralCmd,
    },
    /// Monte Carlo verification against exact values.
    Mc {
        #[command(subcommand)]
        cmd: McCmd,
    },
}

#[derive(Subcommand, Debug)]
pub enum ModelCmd {
    /// Expand a model into its explicit form (written as model.json with --out).
    Build(ModelArgs),
    /// Check that a model parses and describes a valid chain.
    Validate(ModelArgs),
}

#[derive(Subcommand, Debug)]
pub enum KatoCmd {
    Diagnose(KatoArgs),
}

#[derive(Subcommand, Debug)]
pub enum FkCmd {
    Gauge(PerturbedArgs),
    Semigroup(SemigroupArgs),
}

#[derive(Subcommand, Debug)]
pub enum GirsanovCmd {
    Check(SpectralArgs),
}

#[derive(Subcommand, Debug)]
pub enum SpectralCmd {
    Report(SpectralArgs),
    Sweep(SweepArgs),
}

#[derive(Subcommand, Debug)]
pub enum McCmd {
    Verify(McArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct PerturbedArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Measure file `{"<state>": atom}`.
    #[arg(long)]
    pub mu: Option<PathBuf>,
    /// Jump weight file `[[from, to, value], ...]`.
    #[arg(long = "F")]
    pub f: Option<PathBuf>,
    /// Work with the alpha-subprocess (adds killing alpha everywhere).
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct KatoArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub mu: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Times for the small-time profile.
    #[arg(long, value_delimiter = ',', default_values_t = [1e-3, 1e-2, 1e-1, 1.0])]
    pub t: Vec<f64>,
    /// Tolerances for the strong-class certificate, as fractions of the potential's sup.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.25, 0.1])]
    pub fractions: Vec<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct SemigroupArgs {
    #[command(flatten)]
    pub inputs: PerturbedArgs,
    #[arg(long)]
    pub t: f64,
    /// Function file `{"<state>": value}`; the constant 1 when absent.
    #[arg(long = "fn")]
    pub func: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SpectralArgs {
    #[command(flatten)]
    pub inputs: PerturbedArgs,
    /// Exponents, e.g. `1,4/3,2,3,inf`.
    #[arg(long, value_delimiter = ',', value_parser = parse_exponent, default_values = ["1", "4/3", "2", "3", "inf"])]
    pub p: Vec<Exponent>,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    /// Family file, e.g. `{"kind": "tree", "degree": 3, "boundary": "dirichlet"}`.
    #[arg(long)]
    pub model: PathBuf,
    /// Measure file `{"kind": "zero" | "interior" | "uniform_density", ...}`.
    #[arg(long)]
    pub mu: Option<PathBuf>,
    /// Jump weight file `{"kind": "zero" | "constant", ...}`.
    #[arg(long = "F")]
    pub f: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, value_delimiter = ',', value_parser = parse_exponent)]
    pub p: Vec<Exponent>,
    /// Sizes, e.g. `6-14` or `8,16,32`.
    #[arg(long, value_delimiter = ',', value_parser = parse_size_range, required = true)]
    pub sizes: Vec<(usize, usize)>,
    /// Also sweep the reflecting counterpart and compare the limits.
    #[arg(long)]
    pub split: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum What {
    MeanOne,
    Quadvar,
    Girsanov,
    Fk,
}

#[derive(Args, Debug, Clone)]
pub struct McArgs {
    #[arg(long, value_enum)]
    pub what: What,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub mu: Option<PathBuf>,
    /// Jump weight (the jump sizes `b` for quadvar).
    #[arg(long = "F")]
    pub f: Option<PathBuf>,
    /// Paths per cell, e.g. `100000` or `1e5`.
    #[arg(long = "N", value_parser = parse_count, default_value = "100000")]
    pub n: usize,
    #[arg(long, required = true)]
    pub seed: u64,
    /// Horizons. quadvar defaults to a horizon where survival drops below 1e-6.
    #[arg(long, value_delimiter = ',')]
    pub t: Vec<f64>,
    /// Start states; all states when absent (state 0 for girsanov and fk).
    #[arg(long, value_delimiter = ',')]
    pub x: Vec<usize>,
    /// Test function for fk.
    #[arg(long = "fn")]
    pub func: Option<PathBuf>,
}

fn parse_exponent(s: &str) -> Result<Exponent, String> {
    let s = s.trim();
    let v = match s {
        "inf" | "infinity" | "∞" => f64::INFINITY,
        _ => match s.split_once('/') {
            Some((a, b)) => {
                let a: f64 = a.trim().parse().map_err(|_| format!("bad exponent {s}"))?;
                let b: f64 = b.trim().parse().map_err(|_| format!("bad exponent {s}"))?;
                a / b
            }
            None => s.parse().map_err(|_| format!("bad exponent {s}"))?,
        },
    };
    Exponent::new(v).map_err(|e| e.to_string())
}

fn parse_size_range(s: &str) -> Result<(usize, usize), String> {
    let bad = || format!("bad size {s}");
    match s.split_once('-') {
        Some((a, b)) => {
            let (a, b) = (
                a.trim().parse().map_err(|_| bad())?,
                b.trim().parse().map_err(|_| bad())?,
            );
            if a > b {
                return Err(format!("empty size range {s}"));
            }
            Ok((a, b))
        }
        None => {
            let a = s.trim().parse().map_err(|_| bad())?;
            Ok((a, a))
        }
    }
}

fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    let v: f64 = s.parse().map_err(|_| format!("bad count {s}"))?;
    if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
        Ok(v as usize)
    } else {
        Err(format!("bad count {s}"))
    }
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'a str,
    ok: bool,
    violations: &'a [String],
    result: &'a serde_json::Value,
}

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    args: Vec<String>,
    threads: usize,
    started_unix_seconds: f64,
    elapsed_seconds: f64,
    exit_code: u8,
}

/// Runs a parsed command and returns what it produced.
pub fn run(cli: &Cli) -> CliResult<Output> {
    init_threads(cli.threads);
    match &cli.command {
        Command::Model {
            cmd: ModelCmd::Build(a),
        } => commands::model_build(a),
        Command::Model {
            cmd: ModelCmd::Validate(a),
        } => commands::model_validate(a),
        Command::Kato {
            cmd: KatoCmd::Diagnose(a),
        } => commands::kato_diagnose(a),
        Command::Fk {
            cmd: FkCmd::Gauge(a),
        } => commands::fk_gauge(a),
        Command::Fk {
            cmd: FkCmd::Semigroup(a),
        } => commands::fk_semigroup(a),
        Command::Girsanov {
            cmd: GirsanovCmd::Check(a),
        } => commands::girsanov_check(a),
        Command::Spectral {
            cmd: SpectralCmd::Report(a),
        } => commands::spectral_report(a),
        Command::Spectral {
            cmd: SpectralCmd::Sweep(a),
        } => commands::spectral_sweep(a),
        Command::Mc {
            cmd: McCmd::Verify(a),
        } => commands::mc_verify(a),
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(path, e))
}

/// Writes the artifacts of `out` and returns the exit code it calls for.
pub fn emit(
    cli: &Cli,
    args: &[String],
    out: &Output,
    started: SystemTime,
    clock: Instant,
) -> CliResult<u8> {
    let report = to_json(&Report {
        command: &out.command,
        ok: out.violations.is_empty(),
        violations: &out.violations,
        result: &out.report,
    });
    let code = if out.violations.is_empty() { 0 } else { 2 };
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            write(dir, "report.json", &report)?;
            write(dir, "table.csv", &out.table.to_csv())?;
            for (name, text) in &out.extra {
                write(dir, name, text)?;
            }
            let meta = Meta {
                tool: "fkchain",
                version: env!("CARGO_PKG_VERSION"),
                command: &out.command,
                args: args.to_vec(),
                threads: rayon::current_num_threads(),
                started_unix_seconds: started
                    .duration_since(UNIX_EPOCH)
                    .map_or(0.0, |d| d.as_secs_f64()),
                elapsed_seconds: clock.elapsed().as_secs_f64(),
                exit_code: code,
            };
            write(dir, "meta.json", &to_json(&meta))?;
        }
        None => print!("{report}"),
    }
    if code != 0 {
        eprintln!("error: {}", CliError::Invariant(out.violations.clone()));
    }
    Ok(code)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let started = SystemTime::now();
    let clock = Instant::now();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let shown: Vec<String> = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let result = run(&cli).and_then(|out| emit(&cli, &shown, &out, started, clock));
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_parsers() {
        assert_eq!(parse_exponent("4/3").unwrap(), Exponent(4.0 / 3.0));
        assert_eq!(parse_exponent("inf").unwrap(), Exponent::INFINITY);
        assert!(parse_exponent("0.5").is_err());
        assert_eq!(parse_size_range("6-14").unwrap(), (6, 14));
        assert_eq!(parse_size_range("8").unwrap(), (8, 8));
        assert!(parse_size_range("9-3").is_err());
        assert_eq!(parse_count("1e5").unwrap(), 100_000);
        assert!(parse_count("1.5").is_err());
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(main_with_args(["fkchain", "frobnicate"]), 1);
        assert_eq!(
            main_with_args(["fkchain", "mc", "verify", "--what", "mean-one", "--model", "m.json"]),
            1
        );
        assert_eq!(main_with_args(["fkchain", "--help"]), 0);
    }

    #[test]
    fn violations_exit_with_two() {
        let cli =
            Cli::try_parse_from(["fkchain", "model", "validate", "--model", "m.json"]).unwrap();
        let out = Output {
            command: "test".into(),
            report: serde_json::Value::Null,
            table: Default::default(),
            extra: Vec::new(),
            violations: vec!["ordering".into()],
        };
        let dir = std::env::temp_dir().join(format!("fkchain-cli-{}", std::process::id()));
        let cli = Cli {
            out: Some(dir.clone()),
            ..cli
        };
        assert_eq!(
            emit(&cli, &[], &out, SystemTime::now(), Instant::now()).unwrap(),
            2
        );
        assert!(dir.join("meta.json").exists());
        std::fs::remove_dir_all(dir).unwrap();
    }
}
