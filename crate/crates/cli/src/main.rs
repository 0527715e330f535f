//! Command-line front end: `run` drives the Monte Carlo sweep, `check`
//! evaluates the recovery condition and error bounds on user-supplied data.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ndarray::prelude::*;

use modbpdn::bounds::{self, BoundReport};
use modbpdn::harness::{run_experiment, ExperimentConfig, SummaryPoint};
use modbpdn::model::{SensingMatrix, SupportPartition};
use modbpdn::solver::SolverOptions;

#[derive(Parser)]
#[command(
    name = "modbpdn",
    about = "Sparse recovery with partially known support: solver, bounds, experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded Monte Carlo sweep and write CSV + plot data
    Run(RunArgs),
    /// Evaluate the recovery condition and bounds on data from CSV files
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Signal length
    #[arg(long)]
    m: Option<usize>,
    /// True support size |N|
    #[arg(long = "support-size")]
    support_size: Option<usize>,
    /// Measurement counts; entries in (0,1) are fractions of m
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<String>>,
    /// Unknown-support sizes |Δ| to sweep
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<usize>>,
    /// Erroneous-support sizes |Δ_e| to sweep
    #[arg(long = "delta-e", value_delimiter = ',')]
    delta_e: Option<Vec<usize>>,
    /// Measurement noise variance σ_w²
    #[arg(long = "noise-var")]
    noise_var: Option<f64>,
    /// Variance of the nonzero signal entries
    #[arg(long = "signal-var")]
    signal_var: Option<f64>,
    /// Trials per sweep point
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed; fully determines every output byte
    #[arg(long)]
    seed: Option<u64>,
    /// Multiplier applied to γ* for the solve
    #[arg(long = "gamma-slack")]
    gamma_slack: Option<f64>,
    /// Output stem; .trials.csv, .summary.csv, .n<n>.de<d>.dat are appended
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value file supplying any of the above (command line wins)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Sensing matrix, dense CSV, one row per line, header optional
    #[arg(long)]
    matrix: PathBuf,
    /// Measurement vector
    #[arg(long)]
    y: PathBuf,
    /// Known-support indices T, 1-based
    #[arg(long)]
    support: PathBuf,
    /// Unknown-support indices Δ, 1-based
    #[arg(long)]
    delta: PathBuf,
    /// Evaluate bounds at this γ instead of γ*
    #[arg(long)]
    gamma: Option<f64>,
    /// ‖w‖_∞ for the noisy ℓ∞ bound
    #[arg(long = "noise-inf", default_value_t = 0.0)]
    noise_inf: f64,
    /// ‖w‖₂ for the ℓ2 bound
    #[arg(long = "noise-l2", default_value_t = 0.0)]
    noise_l2: f64,
    /// Rescale matrix columns to unit norm instead of requiring it
    #[arg(long)]
    normalize: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Command::Run(args) => cmd_run(args),
        Command::Check(args) => cmd_check(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

struct RunSettings {
    m: usize,
    support_size: usize,
    n: Vec<String>,
    delta: Vec<usize>,
    delta_e: Vec<usize>,
    noise_var: f64,
    signal_var: f64,
    trials: usize,
    seed: u64,
    gamma_slack: f64,
    out: PathBuf,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            m: 1024,
            support_size: 15,
            n: vec!["0.2".into(), "0.3".into(), "0.5".into()],
            delta: vec![0, 5, 10, 15],
            delta_e: vec![0],
            noise_var: 0.0003,
            signal_var: 100.0,
            trials: 50,
            seed: 42,
            gamma_slack: 1.0,
            out: PathBuf::from("results/run"),
        }
    }
}

fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    split_list(value)
        .iter()
        .map(|t| t.parse::<T>().with_context(|| format!("config key '{key}': bad entry '{t}'")))
        .collect()
}

fn apply_config(settings: &mut RunSettings, path: &Path) -> Result<()> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("{}:{}: expected key=value", path.display(), idx + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let ctx = || format!("{}:{}: key '{key}'", path.display(), idx + 1);
        match key {
            "m" => settings.m = value.parse().with_context(ctx)?,
            "support-size" => settings.support_size = value.parse().with_context(ctx)?,
            "n" => settings.n = split_list(value),
            "delta" => settings.delta = parse_list(value, key)?,
            "delta-e" => settings.delta_e = parse_list(value, key)?,
            "noise-var" => settings.noise_var = value.parse().with_context(ctx)?,
            "signal-var" => settings.signal_var = value.parse().with_context(ctx)?,
            "trials" => settings.trials = value.parse().with_context(ctx)?,
            "seed" => settings.seed = value.parse().with_context(ctx)?,
            "gamma-slack" => settings.gamma_slack = value.parse().with_context(ctx)?,
            "out" => settings.out = PathBuf::from(value),
            other => bail!("{}:{}: unknown config key '{other}'", path.display(), idx + 1),
        }
    }
    Ok(())
}

/// Integer tokens are absolute counts; tokens in (0,1) are fractions of m,
/// rounded to the nearest integer.
fn resolve_n(tokens: &[String], m: usize) -> Result<Vec<usize>> {
    tokens
        .iter()
        .map(|t| {
            if let Ok(count) = t.parse::<usize>() {
                return Ok(count);
            }
            let f: f64 = t
                .parse()
                .with_context(|| format!("measurement count '{t}' is not a number"))?;
            if f > 0.0 && f < 1.0 {
                Ok((f * m as f64).round() as usize)
            } else {
                bail!("measurement count '{t}' must be a positive integer or a fraction in (0,1)")
            }
        })
        .collect()
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let mut s = RunSettings::default();
    if let Some(path) = &args.config {
        apply_config(&mut s, path)?;
    }
    if let Some(v) = args.m {
        s.m = v;
    }
    if let Some(v) = args.support_size {
        s.support_size = v;
    }
    if let Some(v) = args.n {
        s.n = v;
    }
    if let Some(v) = args.delta {
        s.delta = v;
    }
    if let Some(v) = args.delta_e {
        s.delta_e = v;
    }
    if let Some(v) = args.noise_var {
        s.noise_var = v;
    }
    if let Some(v) = args.signal_var {
        s.signal_var = v;
    }
    if let Some(v) = args.trials {
        s.trials = v;
    }
    if let Some(v) = args.seed {
        s.seed = v;
    }
    if let Some(v) = args.gamma_slack {
        s.gamma_slack = v;
    }
    if let Some(v) = args.out {
        s.out = v;
    }

    let cfg = ExperimentConfig {
        m: s.m,
        size_n: s.support_size,
        n_values: resolve_n(&s.n, s.m)?,
        delta_values: s.delta,
        delta_e_values: s.delta_e,
        sigma_w2: s.noise_var,
        signal_var: s.signal_var,
        trials: s.trials,
        base_seed: s.seed,
        gamma_slack: s.gamma_slack,
        out_path: s.out.clone(),
        solver: SolverOptions::default(),
    };
    let summary = run_experiment(&cfg)?;

    println!(
        "{:>6} {:>6} {:>7} {:>9} {:>12} {:>12} {:>12} {:>12}",
        "n", "|D|", "|De|", "ok/total", "gamma*", "errLinf", "errL2", "boundL2"
    );
    for p in &summary.points {
        println!("{}", summary_line(p));
    }
    println!(
        "wrote {stem}.trials.csv, {stem}.summary.csv and per-curve .dat files",
        stem = s.out.display()
    );

    let any_applicable = summary.points.iter().any(|p| p.count_applicable > 0);
    if summary.points.is_empty() || any_applicable {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("recovery condition failed in every trial of every sweep point");
        Ok(ExitCode::from(2))
    }
}

fn display_stat(mean: Option<f64>) -> String {
    mean.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into())
}

fn summary_line(p: &SummaryPoint) -> String {
    format!(
        "{:>6} {:>6} {:>7} {:>4}/{:<4} {:>12} {:>12} {:>12} {:>12}",
        p.n,
        p.size_delta,
        p.size_delta_e,
        p.count_applicable,
        p.count_total,
        display_stat(p.gamma_star.mean),
        display_stat(p.err_linf_vs_c.mean),
        display_stat(p.err_l2_vs_x.mean),
        display_stat(p.bound_l2.mean),
    )
}

fn cmd_check(args: CheckArgs) -> Result<ExitCode> {
    let a = read_matrix(&args.matrix)?;
    let (rows, cols) = a.dim();
    let mat = if args.normalize {
        SensingMatrix::normalizing(a)?
    } else {
        SensingMatrix::new(a).context("matrix columns must have unit norm (or pass --normalize)")?
    };
    let y = Array1::from_vec(read_numbers(&args.y)?);
    if y.len() != rows {
        bail!("y has {} entries but the matrix has {rows} rows", y.len());
    }
    let set_t = read_indices(&args.support, cols)?;
    let set_delta = read_indices(&args.delta, cols)?;
    let partition = SupportPartition::from_known_parts(cols, set_t, set_delta)?;

    println!("matrix           : {rows} x {cols}");
    println!(
        "|T| = {}, |Delta| = {}",
        partition.set_t().len(),
        partition.set_delta().len()
    );

    let report = match bounds::bound_report(
        &mat,
        y.view(),
        &partition,
        args.gamma,
        args.noise_inf,
        args.noise_l2,
    ) {
        Ok(r) => r,
        Err(modbpdn::Error::NotApplicable(_)) => {
            let cf = bounds::condition_factor(&mat, &partition)?;
            println!("condition factor : {cf:.12e}");
            println!("gamma*           : undefined (condition factor <= 0)");
            println!("applicable       : false");
            return Ok(ExitCode::from(2));
        }
        Err(e) => return Err(e.into()),
    };
    print_report(&report, args.gamma);
    Ok(if report.applicable { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn print_report(r: &BoundReport, gamma_arg: Option<f64>) {
    println!("condition factor : {:.12e}", r.condition_factor);
    println!("lhs of condition : {:.12e}", r.lhs_condition);
    match r.gamma_star {
        Some(gs) => println!("gamma*           : {gs:.12e}"),
        None => println!("gamma*           : undefined (condition factor <= 0)"),
    }
    let at = gamma_arg.or(r.gamma_star).unwrap_or(f64::NAN);
    println!("bounds at gamma  : {at:.12e}");
    println!("linf bound       : {:.12e}", r.linf_bound);
    println!("l2 bound         : {:.12e}", r.l2_bound);
    println!("applicable       : {}", r.applicable);
}

/// Numeric tokens of one line, split on commas and whitespace. `None` if any
/// token fails to parse (used for header sniffing).
fn numeric_tokens(line: &str) -> Option<Vec<f64>> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().ok())
        .collect()
}

/// Non-empty lines as rows of numbers; one leading header line tolerated.
fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    let mut first_data_line = true;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match numeric_tokens(line) {
            Some(row) => {
                rows.push(row);
                first_data_line = false;
            }
            None if first_data_line => first_data_line = false, // header
            None => bail!("{}:{}: unparseable row", path.display(), idx + 1),
        }
    }
    Ok(rows)
}

fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let rows = read_rows(path)?;
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        bail!("{}: rows have differing lengths", path.display());
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((flat.len() / cols, cols), flat).expect("shape from row scan"))
}

fn read_numbers(path: &Path) -> Result<Vec<f64>> {
    Ok(read_rows(path)?.into_iter().flatten().collect())
}

/// 1-based indices from a file, returned 0-based.
fn read_indices(path: &Path, m: usize) -> Result<Vec<usize>> {
    read_numbers(path)?
        .into_iter()
        .map(|v| {
            let idx = v as usize;
            if idx as f64 != v || idx == 0 || idx > m {
                bail!("{}: index {v} out of range 1..={m}", path.display());
            }
            Ok(idx - 1)
        })
        .collect()
}
