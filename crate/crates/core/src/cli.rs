//! Command-line interface.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use crate::backtest::{run_backtest, BacktestConfig};
use crate::chain_ladder::{estimate, reserve_t0, Gamma};
use crate::error::{Error, Result};
use crate::fiducial::{coverage_experiment, write_density_csv};
use crate::scr::{compute_scr, Method};
use crate::triangle::Triangle;

#[derive(Debug, Parser)]
#[command(name = "reserve-risk", version, about = "One-year reserve risk for chain-ladder triangles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Chain-ladder best-estimate reserves by accident year.
    Reserve(ReserveArgs),
    /// Solvency capital requirement of one triangle.
    Scr(ScrArgs),
    /// Nested Monte-Carlo backtest of the probability of solvency.
    Backtest(BacktestArgs),
    /// Coverage experiment for the normal-variance example.
    Fiducial(FiducialArgs),
}

#[derive(Debug, Args)]
pub struct ReserveArgs {
    #[arg(long)]
    pub triangle: PathBuf,
    #[arg(long, value_parser = parse_gamma)]
    pub gamma: Gamma,
}

#[derive(Debug, Args)]
pub struct ScrArgs {
    #[arg(long)]
    pub triangle: PathBuf,
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    #[arg(long, value_parser = parse_gamma)]
    pub gamma: Gamma,
    #[arg(long, default_value_t = 0.995, value_parser = parse_alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = 100_000)]
    pub scenarios: usize,
    /// Chosen from the clock and printed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// CSV report; the run manifest goes next to it with extension `.manifest.toml`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("scale").required(true).args(["sigma2hat", "sigma_true"]))]
pub struct FiducialArgs {
    #[arg(long)]
    pub n: usize,
    /// Only the scale matters for coverage; either flag sets it.
    #[arg(long)]
    pub sigma2hat: Option<f64>,
    #[arg(long)]
    pub sigma_true: Option<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.99,0.995", value_parser = parse_alpha)]
    pub alphas: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1999)]
    pub scenarios: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Writes `x,density_a,density_b` on a grid over (0, 5].
    #[arg(long)]
    pub density_out: Option<PathBuf>,
}

fn parse_gamma(s: &str) -> std::result::Result<Gamma, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_alpha(s: &str) -> std::result::Result<f64, String> {
    let a: f64 = s.trim().parse().map_err(|_| format!("'{s}' is not a number"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("confidence level must lie in (0, 1), got {a}"))
    }
}

fn resolve_seed(seed: Option<u64>, out: &mut impl Write) -> io::Result<u64> {
    match seed {
        Some(s) => Ok(s),
        None => {
            let s = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_nanos() as u64)
                .unwrap_or(0);
            writeln!(out, "seed (auto): {s}")?;
            Ok(s)
        }
    }
}

fn install_workers(workers: Option<usize>) {
    if let Some(w) = workers {
        // fails only if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
}

pub fn run(cli: Cli, out: &mut impl Write) -> Result<()> {
    match cli.command {
        Command::Reserve(args) => cmd_reserve(args, out),
        Command::Scr(args) => cmd_scr(args, out),
        Command::Backtest(args) => cmd_backtest(args, out),
        Command::Fiducial(args) => cmd_fiducial(args, out),
    }
}

pub fn cmd_reserve(args: ReserveArgs, out: &mut impl Write) -> Result<()> {
    let tri = Triangle::from_path(&args.triangle)?;
    let est = estimate(&tri, args.gamma)?;
    let reserves = reserve_t0(&tri, &est)?;
    writeln!(out, "accident_year,reserve")?;
    for (i, r) in reserves.per_year.iter().enumerate() {
        writeln!(out, "{i},{r:.2}")?;
    }
    writeln!(out, "total,{:.2}", reserves.total)?;
    Ok(())
}

pub fn cmd_scr(args: ScrArgs, out: &mut impl Write) -> Result<()> {
    let tri = Triangle::from_path(&args.triangle)?;
    let seed = resolve_seed(args.seed, out)?;
    let r = compute_scr(&tri, args.method, args.gamma, args.alpha, args.scenarios, seed)?;
    if r.spread == 0.0 {
        log::warn!("all simulated losses are equal; the triangle shows no dispersion");
        writeln!(out, "warning: zero spread in simulated losses")?;
    }
    writeln!(out, "method: {}", r.method)?;
    writeln!(out, "gamma: {}", r.gamma)?;
    writeln!(out, "alpha: {}", r.alpha)?;
    writeln!(out, "scenarios: {}", r.scenarios)?;
    writeln!(out, "seed: {}", r.seed)?;
    writeln!(out, "reserve_t0: {:.2}", r.reserve_t0)?;
    writeln!(out, "scr: {:.2}", r.scr)?;
    Ok(())
}

pub fn cmd_backtest(args: BacktestArgs, out: &mut impl Write) -> Result<()> {
    let mut config = BacktestConfig::from_path(&args.config)?;
    if let Some(s) = args.s {
        config.s = s;
    }
    if let Some(t) = args.t {
        config.t = t;
    }
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(w) = args.workers {
        config.workers = w;
    }
    let report = run_backtest(&config)?;
    write!(out, "{}", report.table())?;
    if let Some(path) = args.out {
        report.write_csv(BufWriter::new(File::create(&path)?))?;
        let manifest = path.with_extension("manifest.toml");
        std::fs::write(&manifest, report.manifest_toml()?)?;
        writeln!(out, "report: {}", path.display())?;
        writeln!(out, "manifest: {}", manifest.display())?;
    }
    Ok(())
}

pub fn cmd_fiducial(args: FiducialArgs, out: &mut impl Write) -> Result<()> {
    let sigma_true = match (args.sigma_true, args.sigma2hat) {
        (Some(s), _) => s,
        (None, Some(s2)) if s2 > 0.0 => s2.sqrt(),
        (None, Some(s2)) => return Err(Error::Config(format!("sigma2hat must be positive, got {s2}"))),
        (None, None) => unreachable!("clap requires one of the scale flags"),
    };
    install_workers(args.workers);
    let seed = resolve_seed(args.seed, out)?;
    let report = coverage_experiment(sigma_true, args.n, &args.alphas, args.replicates, args.scenarios, seed)?;
    writeln!(
        out,
        "n = {}, replicates = {}, scenarios = {}, seed = {}",
        report.n, report.replicates, report.scenarios, report.seed
    )?;
    report.write_table(&mut *out)?;
    if let Some(path) = args.density_out {
        write_density_csv(BufWriter::new(File::create(&path)?), args.n, 5.0, 500)?;
        writeln!(out, "densities: {}", path.display())?;
    }
    Ok(())
}
