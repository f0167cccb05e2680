//! Command-line front end for the liquidation simulator.

pub mod config;
pub mod report;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use miqado_core::{bs_call_price, generate_gbm, optimal_premium_factor, run_sweep, BsInputs, GbmParams, Price};

#[derive(Debug, Parser)]
#[command(name = "miqado", version, about = "Liquidation and support-session simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Price the takeover call and print the optimal premium factor.
    Price(PriceArgs),
    /// Run a configured scenario sweep and write report files.
    Simulate(SimulateArgs),
    /// Print a seeded GBM price path as CSV.
    Gbm(GbmArgs),
    /// Recompute metrics from an outcomes CSV.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct PriceArgs {
    /// Collateral price at t0.
    #[arg(long)]
    pub spot: f64,
    /// Debt to repay at maturity.
    #[arg(long)]
    pub strike: f64,
    /// Annual volatility.
    #[arg(long)]
    pub sigma: f64,
    /// Term in years.
    #[arg(long)]
    pub term: f64,
    /// Borrowing interest rate.
    #[arg(long, default_value_t = 0.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub foreign_rate: f64,
    /// Collateral units the call is written on.
    #[arg(long, default_value_t = 1.0)]
    pub collateral: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct GbmArgs {
    #[arg(long)]
    pub p0: Price,
    #[arg(long, default_value_t = 0.0)]
    pub mu: f64,
    #[arg(long)]
    pub sigma: f64,
    /// Years per step.
    #[arg(long)]
    pub dt: f64,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Timestamp of the first point.
    #[arg(long, default_value_t = 0)]
    pub start: i64,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub outcomes: PathBuf,
    /// Write metrics.csv and payoff_table.csv here instead of printing.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Usage errors exit with 2, runtime errors with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Runtime(err) => write!(f, "error: {err:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> Self {
        CliError::Runtime(err)
    }
}

/// `v` with 10 significant digits, in plain notation.
pub fn significant(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (9 - magnitude).max(0) as usize;
    let factor = 10f64.powi(magnitude - 9);
    let rounded = if magnitude > 9 { (v / factor).round() * factor } else { v };
    format!("{rounded:.decimals$}")
}

pub fn cmd_price(args: &PriceArgs, out: &mut impl Write) -> Result<(), CliError> {
    let inputs = BsInputs::new(args.spot, args.strike, args.rate, args.foreign_rate, args.sigma, args.term)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let price = bs_call_price(&inputs);
    let lambda = optimal_premium_factor(
        args.spot,
        args.collateral,
        args.strike,
        args.rate,
        args.foreign_rate,
        args.sigma,
        args.term,
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    writeln!(out, "price {}", significant(price)).map_err(anyhow::Error::from)?;
    writeln!(out, "lambda_star {}", significant(lambda)).map_err(anyhow::Error::from)?;
    Ok(())
}

pub fn cmd_gbm(args: &GbmArgs, out: &mut impl Write) -> Result<(), CliError> {
    let params = GbmParams {
        p0: args.p0,
        mu: args.mu,
        sigma: args.sigma,
        dt: args.dt,
        steps: args.steps,
        seed: args.seed,
        start: args.start,
    };
    let path = generate_gbm(&params).map_err(|e| CliError::Usage(e.to_string()))?;
    out.write_all(path.to_csv().as_bytes()).map_err(anyhow::Error::from)?;
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let config = config::load(&args.config)?;
    let seed = args.seed.unwrap_or(config.seed);
    let prepared = config::prepare(&config, &args.config, seed)?;
    let sweep = run_sweep(&prepared.scenario, &prepared.lambdas, &prepared.terms_secs)
        .context("simulation failed")?;

    let reports = std::iter::once(&sweep.baseline).chain(sweep.cells.iter().map(|c| &c.report));
    let records = sweep
        .baseline_records
        .iter()
        .chain(sweep.cells.iter().flat_map(|c| c.records.iter()));
    let files = [
        ("report.json", report::report_json(&sweep, prepared.scenario.regime, prepared.seed)?),
        ("payoff_table.csv", report::payoff_csv(&sweep.payoff_rows())?),
        ("metrics.csv", report::metrics_csv(reports)?),
        ("outcomes.csv", report::outcomes_csv(records)?),
        ("events.csv", miqado_core::sim::events_to_csv(&prepared.scenario.events)),
    ];
    report::write_atomically(&args.out, &files)?;
    Ok(())
}

pub fn cmd_analyze(args: &AnalyzeArgs, out: &mut impl Write) -> Result<(), CliError> {
    let bytes = fs::read(&args.outcomes)
        .with_context(|| format!("cannot read {}", args.outcomes.display()))?;
    let records = report::read_outcomes(&bytes)
        .with_context(|| format!("invalid outcomes file {}", args.outcomes.display()))?;
    let reports = report::reaggregate(&records);
    let rows: Vec<_> = reports.iter().flat_map(|r| r.payoff_rows.clone()).collect();
    let metrics = report::metrics_csv(&reports)?;
    let payoff = report::payoff_csv(&rows)?;
    match &args.out {
        Some(dir) => report::write_atomically(dir, &[("metrics.csv", metrics), ("payoff_table.csv", payoff)])?,
        None => out.write_all(metrics.as_bytes()).map_err(anyhow::Error::from)?,
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match &cli.command {
        Command::Price(args) => cmd_price(args, &mut out),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Gbm(args) => cmd_gbm(args, &mut out),
        Command::Analyze(args) => cmd_analyze(args, &mut out),
    }
}
