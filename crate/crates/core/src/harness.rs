//! Monte Carlo harness: sweeps measurement count and support-error sizes,
//! runs seeded trials, and serializes per-trial rows, per-sweep-point
//! aggregates, and plot-ready series files.
//!
//! Reproducibility contract: `(config, base_seed)` determines every output
//! byte. Trials are distributed over a thread pool but reduced in trial
//! order, each trial re-derives its own RNG from a hashed seed, and the
//! sensing matrix is drawn once per measurement count from its own seed.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::prelude::*;
use rayon::prelude::*;

use crate::bounds::Factors;
use crate::error::{Error, Result};
use crate::model::{
    generate_partition, generate_sensing_matrix, generate_signal, measure, seeds, SensingMatrix,
};
use crate::solver::{genie_ls, solve_modified_bpdn, SolverOptions};

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub m: usize,
    pub size_n: usize,
    /// Measurement counts to sweep; one sensing matrix per entry.
    pub n_values: Vec<usize>,
    pub delta_values: Vec<usize>,
    pub delta_e_values: Vec<usize>,
    pub sigma_w2: f64,
    pub signal_var: f64,
    pub trials: usize,
    pub base_seed: u64,
    /// Multiplier on γ* for the solve; 1.0 sits exactly on the threshold.
    pub gamma_slack: f64,
    /// Stem for output files; suffixes `.trials.csv`, `.summary.csv`,
    /// `.n<n>.de<d>.dat` are appended.
    pub out_path: PathBuf,
    pub solver: SolverOptions,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::Argument("trials must be at least 1".into()));
        }
        if self.size_n > self.m {
            return Err(Error::Argument(format!(
                "support size {} exceeds signal length {}",
                self.size_n, self.m
            )));
        }
        for &n in &self.n_values {
            if n == 0 || n >= self.m {
                return Err(Error::Argument(format!(
                    "measurement count {n} must lie in 1..{}",
                    self.m
                )));
            }
        }
        for &d in &self.delta_values {
            if d > self.size_n {
                return Err(Error::Argument(format!(
                    "unknown-support size {d} exceeds support size {}",
                    self.size_n
                )));
            }
        }
        for &de in &self.delta_e_values {
            if self.size_n + de > self.m {
                return Err(Error::Argument(format!(
                    "support size {} plus erroneous size {de} exceeds signal length {}",
                    self.size_n, self.m
                )));
            }
        }
        if !(self.sigma_w2 >= 0.0 && self.sigma_w2.is_finite()) {
            return Err(Error::Argument("noise variance must be finite and >= 0".into()));
        }
        if !(self.signal_var >= 0.0 && self.signal_var.is_finite()) {
            return Err(Error::Argument("signal variance must be finite and >= 0".into()));
        }
        if !(self.gamma_slack > 0.0 && self.gamma_slack.is_finite()) {
            return Err(Error::Argument("gamma slack must be finite and > 0".into()));
        }
        Ok(())
    }
}

/// One solved trial. `applicable` reflects the sign of the condition factor;
/// when it is false the γ*-derived fields are absent but the errors are still
/// measured, using the fallback penalty `‖A'y‖_∞ / 100`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub m: usize,
    pub n: usize,
    pub size_n: usize,
    pub size_delta: usize,
    pub size_delta_e: usize,
    pub trial: usize,
    pub seed: u64,
    pub applicable: bool,
    pub gamma_star: Option<f64>,
    pub condition_factor: f64,
    pub err_linf_vs_c: f64,
    pub err_l2_vs_x: f64,
    pub bound_linf: Option<f64>,
    pub bound_l2: Option<f64>,
    pub solver_iters: usize,
    pub kkt_residual: f64,
}

/// Mean and sample standard deviation; absent when no (resp. fewer than two)
/// samples contributed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stat {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

/// Aggregates for one `(n, |Δ|, |Δ_e|)` sweep point. Bound and γ* statistics
/// run over applicable trials only; error, iteration and residual statistics
/// run over every recorded trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryPoint {
    pub m: usize,
    pub n: usize,
    pub size_n: usize,
    pub size_delta: usize,
    pub size_delta_e: usize,
    pub count_total: usize,
    /// Trials excluded for a rank-deficient draw.
    pub count_failed: usize,
    pub count_applicable: usize,
    pub gamma_star: Stat,
    pub condition_factor: Stat,
    pub err_linf_vs_c: Stat,
    pub err_l2_vs_x: Stat,
    pub bound_linf: Stat,
    pub bound_l2: Stat,
    pub solver_iters: Stat,
    pub kkt_residual: Stat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub points: Vec<SummaryPoint>,
}

fn sweep_matrix(cfg: &ExperimentConfig, n: usize) -> SensingMatrix {
    let seed = seeds::matrix_seed(cfg.base_seed, n, cfg.m);
    generate_sensing_matrix(n, cfg.m, &mut seeds::rng_from(seed))
}

fn fallback_gamma(mat: &SensingMatrix, y: ArrayView1<f64>) -> f64 {
    let corr = mat.as_array().t().dot(&y);
    corr.iter().fold(0.0_f64, |m, v| m.max(v.abs())) / 100.0
}

/// Runs one seeded trial against a freshly derived copy of the sweep's
/// sensing matrix. Byte-compatible with the rows `run_experiment` produces,
/// because the matrix seed depends only on `(base_seed, n, m)`.
pub fn run_trial(
    cfg: &ExperimentConfig,
    n: usize,
    size_delta: usize,
    size_delta_e: usize,
    trial: usize,
) -> Result<TrialRecord> {
    cfg.validate()?;
    if n == 0 || n >= cfg.m {
        return Err(Error::Argument(format!(
            "measurement count {n} must lie in 1..{}",
            cfg.m
        )));
    }
    let mat = sweep_matrix(cfg, n);
    run_trial_on(&mat, cfg, n, size_delta, size_delta_e, trial)
}

fn run_trial_on(
    mat: &SensingMatrix,
    cfg: &ExperimentConfig,
    n: usize,
    size_delta: usize,
    size_delta_e: usize,
    trial: usize,
) -> Result<TrialRecord> {
    let seed = seeds::trial_seed(cfg.base_seed, trial);
    let mut rng = seeds::rng_from(seed);
    let partition = generate_partition(cfg.m, cfg.size_n, size_delta, size_delta_e, &mut rng)?;
    let x = generate_signal(&partition, cfg.signal_var, &mut rng);
    let (y, w) = measure(mat, &x, cfg.sigma_w2, &mut rng);

    let factors = Factors::new(mat, &partition)?;
    let c = genie_ls(mat, partition.set_ne(), y.view())?;

    let condition_factor = factors.condition_factor();
    let applicable = condition_factor > 0.0;
    let gamma_star = applicable.then(|| factors.lhs_condition(y.view()) / condition_factor);
    let gamma = match gamma_star {
        Some(gs) => cfg.gamma_slack * gs,
        None => fallback_gamma(mat, y.view()),
    };

    let sol = solve_modified_bpdn(mat, y.view(), partition.set_t(), gamma, &cfg.solver)?;
    let diff_c = &sol.b_hat - &c;
    let err_linf_vs_c = diff_c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let diff_x = &sol.b_hat - &x;
    let err_l2_vs_x = diff_x.dot(&diff_x).sqrt();

    let (bound_linf, bound_l2) = if applicable {
        let w2 = w.dot(&w).sqrt();
        (
            Some(gamma * factors.linf_gamma_coeff()),
            Some(factors.l2_noise_coeff() * w2 + gamma * factors.l2_gamma_coeff()),
        )
    } else {
        (None, None)
    };

    Ok(TrialRecord {
        m: cfg.m,
        n,
        size_n: cfg.size_n,
        size_delta,
        size_delta_e,
        trial,
        seed,
        applicable,
        gamma_star,
        condition_factor,
        err_linf_vs_c,
        err_l2_vs_x,
        bound_linf,
        bound_l2,
        solver_iters: sol.iters,
        kkt_residual: sol.kkt_residual,
    })
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let mu = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - mu) * (x - mu)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

fn stat(xs: Vec<f64>) -> Stat {
    Stat { mean: mean(&xs), sd: sample_sd(&xs) }
}

fn summarize(
    cfg: &ExperimentConfig,
    n: usize,
    size_delta: usize,
    size_delta_e: usize,
    records: &[TrialRecord],
    count_failed: usize,
) -> SummaryPoint {
    let applicable: Vec<&TrialRecord> = records.iter().filter(|r| r.applicable).collect();
    SummaryPoint {
        m: cfg.m,
        n,
        size_n: cfg.size_n,
        size_delta,
        size_delta_e,
        count_total: cfg.trials,
        count_failed,
        count_applicable: applicable.len(),
        gamma_star: stat(applicable.iter().filter_map(|r| r.gamma_star).collect()),
        condition_factor: stat(records.iter().map(|r| r.condition_factor).collect()),
        err_linf_vs_c: stat(records.iter().map(|r| r.err_linf_vs_c).collect()),
        err_l2_vs_x: stat(records.iter().map(|r| r.err_l2_vs_x).collect()),
        bound_linf: stat(applicable.iter().filter_map(|r| r.bound_linf).collect()),
        bound_l2: stat(applicable.iter().filter_map(|r| r.bound_l2).collect()),
        solver_iters: stat(records.iter().map(|r| r.solver_iters as f64).collect()),
        kkt_residual: stat(records.iter().map(|r| r.kkt_residual).collect()),
    }
}

/// Full sweep: for each measurement count, draw the sensing matrix once, run
/// every `(|Δ|, |Δ_e|)` combination for `trials` seeded trials (in parallel,
/// reduced in trial order), then write the trial and summary CSVs and the
/// per-curve plot files.
///
/// Output files are created before any numerics so an unwritable path fails
/// immediately. Trials that draw a rank-deficient oracle block are dropped
/// from the records and counted in `count_failed`; any other error aborts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    if let Some(dir) = cfg.out_path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let trials_path = with_suffix(&cfg.out_path, ".trials.csv");
    let summary_path = with_suffix(&cfg.out_path, ".summary.csv");
    File::create(&trials_path).map_err(|e| Error::io(&trials_path, e))?;
    File::create(&summary_path).map_err(|e| Error::io(&summary_path, e))?;

    let mut records = Vec::new();
    let mut points = Vec::new();
    for &n in &cfg.n_values {
        let mat = sweep_matrix(cfg, n);
        for &size_delta in &cfg.delta_values {
            for &size_delta_e in &cfg.delta_e_values {
                let outcomes: Vec<Result<TrialRecord>> = (0..cfg.trials)
                    .into_par_iter()
                    .map(|t| run_trial_on(&mat, cfg, n, size_delta, size_delta_e, t))
                    .collect();
                let mut kept = Vec::with_capacity(cfg.trials);
                let mut count_failed = 0;
                for outcome in outcomes {
                    match outcome {
                        Ok(r) => kept.push(r),
                        Err(Error::Singular { .. }) => count_failed += 1,
                        Err(e) => return Err(e),
                    }
                }
                points.push(summarize(cfg, n, size_delta, size_delta_e, &kept, count_failed));
                records.extend(kept);
            }
        }
    }

    let summary = ExperimentSummary { points };
    write_csv(&summary, &records, &cfg.out_path)?;
    emit_plot_data(&summary, &cfg.out_path)?;
    Ok(summary)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// 17 significant digits: round-trips f64 exactly.
fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

pub(crate) const TRIALS_HEADER: &str = "m,n,sizeN,sizeDelta,sizeDeltaE,trial,seed,applicable,\
gammaStar,conditionFactor,errLinfVsC,errL2VsX,boundLinf,boundL2,solverIters,kktResidual";

pub(crate) const SUMMARY_HEADER: &str = "m,n,sizeN,sizeDelta,sizeDeltaE,countTotal,countFailed,\
countApplicable,meanGammaStar,sdGammaStar,meanConditionFactor,sdConditionFactor,meanErrLinfVsC,\
sdErrLinfVsC,meanErrL2VsX,sdErrL2VsX,meanBoundLinf,sdBoundLinf,meanBoundL2,sdBoundL2,\
meanSolverIters,sdSolverIters,meanKktResidual,sdKktResidual";

fn trial_row(r: &TrialRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.m,
        r.n,
        r.size_n,
        r.size_delta,
        r.size_delta_e,
        r.trial,
        r.seed,
        r.applicable,
        fmt_opt(r.gamma_star),
        fmt_float(r.condition_factor),
        fmt_float(r.err_linf_vs_c),
        fmt_float(r.err_l2_vs_x),
        fmt_opt(r.bound_linf),
        fmt_opt(r.bound_l2),
        r.solver_iters,
        fmt_float(r.kkt_residual),
    )
}

fn stat_cells(s: &Stat) -> String {
    format!("{},{}", fmt_opt(s.mean), fmt_opt(s.sd))
}

fn summary_row(p: &SummaryPoint) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        p.m,
        p.n,
        p.size_n,
        p.size_delta,
        p.size_delta_e,
        p.count_total,
        p.count_failed,
        p.count_applicable,
        stat_cells(&p.gamma_star),
        stat_cells(&p.condition_factor),
        stat_cells(&p.err_linf_vs_c),
        stat_cells(&p.err_l2_vs_x),
        stat_cells(&p.bound_linf),
        stat_cells(&p.bound_l2),
        stat_cells(&p.solver_iters),
        stat_cells(&p.kkt_residual),
    )
}

/// Writes `<path>.trials.csv` (one row per kept trial) and
/// `<path>.summary.csv` (one row per sweep point). Absent values are empty
/// cells; floats carry 17 significant digits.
pub fn write_csv(
    summary: &ExperimentSummary,
    records: &[TrialRecord],
    path: &Path,
) -> Result<()> {
    let trials_path = with_suffix(path, ".trials.csv");
    let mut out = buffered(&trials_path)?;
    writeln!(out, "{TRIALS_HEADER}").map_err(|e| Error::io(&trials_path, e))?;
    for r in records {
        writeln!(out, "{}", trial_row(r)).map_err(|e| Error::io(&trials_path, e))?;
    }
    out.flush().map_err(|e| Error::io(&trials_path, e))?;

    let summary_path = with_suffix(path, ".summary.csv");
    let mut out = buffered(&summary_path)?;
    writeln!(out, "{SUMMARY_HEADER}").map_err(|e| Error::io(&summary_path, e))?;
    for p in &summary.points {
        writeln!(out, "{}", summary_row(p)).map_err(|e| Error::io(&summary_path, e))?;
    }
    out.flush().map_err(|e| Error::io(&summary_path, e))
}

fn buffered(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// One whitespace-delimited series file per `(n, |Δ_e|)` pair, named
/// `<path>.n<n>.de<d>.dat`: fraction |Δ|/|N|, mean ℓ2 bound, mean ℓ2 error.
/// Sweep points with no applicable trials become comment lines so the curve
/// simply skips them.
pub fn emit_plot_data(summary: &ExperimentSummary, path: &Path) -> Result<()> {
    let mut curves: Vec<(usize, usize)> = Vec::new();
    for p in &summary.points {
        if !curves.contains(&(p.n, p.size_delta_e)) {
            curves.push((p.n, p.size_delta_e));
        }
    }
    for (n, de) in curves {
        let file = with_suffix(path, &format!(".n{n}.de{de}.dat"));
        let mut out = buffered(&file)?;
        let io_err = |e| Error::io(&file, e);
        writeln!(out, "# fraction |Delta|/|N|   mean l2 bound   mean l2 error vs x")
            .map_err(io_err)?;
        writeln!(out, "# n={n} sizeDeltaE={de}").map_err(io_err)?;
        for p in summary.points.iter().filter(|p| p.n == n && p.size_delta_e == de) {
            let frac = if p.size_n == 0 {
                0.0
            } else {
                p.size_delta as f64 / p.size_n as f64
            };
            match (p.bound_l2.mean, p.err_l2_vs_x.mean) {
                (Some(b), Some(e)) => {
                    writeln!(out, "{} {} {}", fmt_float(frac), fmt_float(b), fmt_float(e))
                        .map_err(io_err)?
                }
                _ => writeln!(
                    out,
                    "# sizeDelta={}: not applicable ({} of {} trials)",
                    p.size_delta, p.count_applicable, p.count_total
                )
                .map_err(io_err)?,
            }
        }
        out.flush().map_err(io_err)?;
    }
    Ok(())
}
