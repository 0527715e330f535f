//! Acceptance gate: one numbered check per release criterion, each printing
//! an `ACCEPTANCE k: PASS/FAIL` line with the measured quantities. Reference
//! values that a check compares against are fixed here on purpose; a red
//! check means the measured behavior genuinely differs from the reference,
//! not that a tolerance needs widening.

mod common;

use common::report_line;
use modbpdn::bounds;
use modbpdn::harness::{run_experiment, run_trial, ExperimentConfig, ExperimentSummary, Stat};
use modbpdn::model::{
    generate_partition, generate_sensing_matrix, sample_subset, seeds, ProblemInstance,
};
use modbpdn::solver::{
    genie_ls, solve_modified_bpdn, solve_restricted, SolverOptions, SolverResult,
};
use ndarray::prelude::*;
use ndarray_linalg::Inverse;
use rand::Rng;
use rand_distr::StandardNormal;
use std::fs;
use std::path::PathBuf;

const M: usize = 1024;

fn tmp_dir(tag: &str) -> PathBuf {
    let dir =
        std::env::temp_dir().join(format!("modbpdn-acceptance-{tag}-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn sweep_config(
    size_n: usize,
    n_values: Vec<usize>,
    delta_values: Vec<usize>,
    delta_e_values: Vec<usize>,
    sigma_w2: f64,
    out: PathBuf,
) -> ExperimentConfig {
    ExperimentConfig {
        m: M,
        size_n,
        n_values,
        delta_values,
        delta_e_values,
        sigma_w2,
        signal_var: 100.0,
        trials: 50,
        base_seed: 42,
        gamma_slack: 1.0,
        out_path: out,
        solver: SolverOptions::default(),
    }
}

fn tight() -> SolverOptions {
    SolverOptions { kkt_tol: 1e-11, rel_tol: 1e-15, ..SolverOptions::default() }
}

fn inf_norm(v: ArrayView1<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.3e}"))
}

fn within_factor_2(measured: Option<f64>, reference: f64) -> bool {
    measured.is_some_and(|m| m >= reference / 2.0 && m <= reference * 2.0)
}

/// Mean ℓ∞ error against the oracle LS fit and its bound, at γ = γ*, against
/// fixed reference means. |Δ| = 0 must be exact (the program *is* the oracle
/// fit then); the other rows must land within a factor of two.
#[test]
fn criterion_1_linf_error_and_bound_reference_values() {
    let dir = tmp_dir("c1");
    let mut cfg =
        sweep_config(15, vec![307], vec![0, 5, 10, 15], vec![0], 3e-4, dir.join("run"));
    // the |Δ|=0 row is asserted down at 1e-6, so drive the solver well below
    cfg.solver = SolverOptions { kkt_tol: 1e-8, rel_tol: 1e-13, ..SolverOptions::default() };
    let summary = run_experiment(&cfg).unwrap();

    // (|Δ|, reference mean error, reference mean bound)
    let rows = [(0usize, 0.0, 0.0), (5, 0.08, 0.09), (10, 0.21, 0.27), (15, 3.3, 9.0)];
    let mut all_ok = true;
    let mut details = Vec::new();
    for (size_delta, ref_err, ref_bound) in rows {
        let p = summary
            .points
            .iter()
            .find(|p| p.size_delta == size_delta)
            .expect("sweep point present");
        let err = p.err_linf_vs_c.mean;
        let bound = p.bound_linf.mean;
        let ok = if size_delta == 0 {
            err.is_some_and(|e| e <= 1e-6) && bound.is_some_and(|b| b <= 1e-6)
        } else {
            within_factor_2(err, ref_err) && within_factor_2(bound, ref_bound)
        };
        all_ok &= ok;
        details.push(format!(
            "|Δ|={size_delta}: err {} (ref {ref_err}), bound {} (ref {ref_bound}), {}/50 applicable{}",
            fmt_opt(err),
            fmt_opt(bound),
            p.count_applicable,
            if ok { "" } else { " ← off" },
        ));
    }
    report_line(&format!(
        "ACCEPTANCE 1: {} — mean ℓ∞ error/bound at γ=γ* (m=1024, |N|=15, n=307, 50 trials): {}",
        if all_ok { "PASS" } else { "FAIL" },
        details.join("; ")
    ));
    assert!(
        all_ok,
        "measured means differ from the reference values by more than a factor of two; \
         they are stable across seeds (the |Δ|=10 means move by <10% over seeds 7/42/99/1234 \
         and |Δ|=15 draws never satisfy the feasibility condition at n=307), so the gap is a \
         property of the documented protocol, not of this run"
    );
}

/// Fraction of draws on which the sufficient condition is satisfiable at all
/// (condition factor > 0), in the regimes the reference numbers describe.
#[test]
fn criterion_2_condition_feasibility_rates() {
    let cfg = ExperimentConfig {
        m: M,
        size_n: 100,
        n_values: vec![205, 922, 993],
        delta_values: vec![5, 100],
        delta_e_values: vec![0],
        sigma_w2: 1e-3,
        signal_var: 100.0,
        trials: 50,
        base_seed: 42,
        gamma_slack: 1.0,
        out_path: PathBuf::from("unused"),
        solver: SolverOptions::default(),
    };
    let rate = |n: usize, size_delta: usize| -> f64 {
        let hits = (0..cfg.trials)
            .filter(|&t| run_trial(&cfg, n, size_delta, 0, t).unwrap().applicable)
            .count();
        hits as f64 / cfg.trials as f64
    };

    let full_09 = rate(922, 100);
    let full_097 = rate(993, 100);
    let small_02 = rate(205, 5);
    let ok_a = full_09 < 0.10;
    let ok_b = full_097 >= 0.50;
    let ok_c = small_02 >= 0.80;
    let ok = ok_a && ok_b && ok_c;
    report_line(&format!(
        "ACCEPTANCE 2: {} — |N|=100 feasibility rates: Δ=N at n=922: {:.0}% (want <10%){}; \
         Δ=N at n=993: {:.0}% (want ≥50%){}; |Δ|=5 at n=205: {:.0}% (want ≥80%){}",
        if ok { "PASS" } else { "FAIL" },
        100.0 * full_09,
        if ok_a { "" } else { " ← off" },
        100.0 * full_097,
        if ok_b { "" } else { " ← off" },
        100.0 * small_02,
        if ok_c { "" } else { " ← off" },
    ));
    assert!(
        ok,
        "with Δ=N the condition factor is 1 − (worst ℓ1 row sum of a 100-column \
         pseudoinverse cross-correlation), which concentrates near 1 − |Δ|√(2/π)/√n ≈ −2 \
         for every n < m; no measurement count below m makes the full-support condition \
         feasible, so the ≥50% clause cannot be met by this protocol"
    );
}

struct Curve {
    label: String,
    inversions: usize,
    steps: String,
}

/// Walks one curve of (mean, sd, count) triples in axis order and counts
/// steps that move against `direction` by more than twice the standard error
/// of the difference; points without an applicable mean are skipped.
fn count_inversions(
    points: &[(Option<f64>, Option<f64>, usize)],
    direction: f64,
) -> (usize, String) {
    let present: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|&(mean, sd, k)| {
            mean.map(|m| (m, sd.unwrap_or(0.0) / (k.max(1) as f64).sqrt()))
        })
        .collect();
    let mut inversions = 0;
    for w in present.windows(2) {
        let (a, se_a) = w[0];
        let (b, se_b) = w[1];
        let noise = 2.0 * se_a.hypot(se_b);
        if direction * (b - a) < -noise {
            inversions += 1;
        }
    }
    let steps: Vec<String> = present.iter().map(|(m, _)| format!("{m:.3e}")).collect();
    (inversions, steps.join(" → "))
}

fn curve_report(summary: &ExperimentSummary, tag: &str) -> Vec<Curve> {
    let pick = |p: &Stat, k: usize| (p.mean, p.sd, k);
    let mut curves = Vec::new();
    let mut ns: Vec<usize> = summary.points.iter().map(|p| p.n).collect();
    ns.dedup();
    let mut deltas: Vec<usize> = summary.points.iter().map(|p| p.size_delta).collect();
    deltas.sort_unstable();
    deltas.dedup();
    let des: Vec<usize> = {
        let mut v: Vec<usize> = summary.points.iter().map(|p| p.size_delta_e).collect();
        v.sort_unstable();
        v.dedup();
        v
    };

    for &de in &des {
        // non-decreasing in |Δ| at fixed (n, |Δe|)
        for &n in &ns {
            let pts: Vec<_> = deltas
                .iter()
                .filter_map(|&d| {
                    summary
                        .points
                        .iter()
                        .find(|p| p.n == n && p.size_delta == d && p.size_delta_e == de)
                })
                .map(|p| pick(&p.bound_l2, p.count_applicable))
                .collect();
            let (inversions, steps) = count_inversions(&pts, 1.0);
            curves.push(Curve { label: format!("{tag} n={n} |Δe|={de}, over |Δ|"), inversions, steps });
        }
        // non-increasing in n at fixed (|Δ|, |Δe|)
        for &d in &deltas {
            let pts: Vec<_> = ns
                .iter()
                .filter_map(|&n| {
                    summary
                        .points
                        .iter()
                        .find(|p| p.n == n && p.size_delta == d && p.size_delta_e == de)
                })
                .map(|p| pick(&p.bound_l2, p.count_applicable))
                .collect();
            let (inversions, steps) = count_inversions(&pts, -1.0);
            curves.push(Curve { label: format!("{tag} |Δ|={d} |Δe|={de}, over n"), inversions, steps });
        }
    }
    curves
}

/// Mean ℓ2 bound must grow with the unknown-support size and shrink with the
/// measurement count, one beyond-noise inversion allowed per curve.
#[test]
fn criterion_3_bound_trends_across_sweeps() {
    let dir = tmp_dir("c3");
    let ns = vec![205, 307, 512];
    let runs = [
        ("|N|=100", sweep_config(100, ns.clone(), vec![0, 5, 10, 50, 100], vec![0], 1e-3, dir.join("a"))),
        ("|N|=100", sweep_config(100, ns.clone(), vec![0, 5, 10, 50, 100], vec![10], 1e-3, dir.join("b"))),
        ("|N|=15", sweep_config(15, ns, vec![0, 5, 10, 15], vec![0], 3e-4, dir.join("c"))),
    ];

    let mut bad = Vec::new();
    let mut total = 0;
    for (tag, cfg) in runs {
        let summary = run_experiment(&cfg).unwrap();
        for curve in curve_report(&summary, tag) {
            total += 1;
            if curve.inversions > 1 {
                bad.push(format!(
                    "{}: {} inversions ({})",
                    curve.label, curve.inversions, curve.steps
                ));
            }
        }
    }
    let ok = bad.is_empty();
    report_line(&format!(
        "ACCEPTANCE 3: {} — ℓ2-bound monotonicity over {total} curves (≤1 beyond-noise inversion each){}{}",
        if ok { "PASS" } else { "FAIL" },
        if ok { "" } else { ": " },
        bad.join("; ")
    ));
    assert!(
        ok,
        "at |Δ|=0 the ℓ2 bound is exactly ‖(A_Ne'A_Ne)⁻¹A_Ne'‖₂·‖w‖₂, and with only 15 \
         support columns the pseudoinverse norm barely shrinks with n while ‖w‖₂ grows \
         like √n, so that curve rises instead of falling; the trend claim holds on every \
         other curve"
    );
}

/// Wherever the sufficient condition certifies uniqueness at γ = 1.001·γ*,
/// the unrestricted solve must land on N_e, agree with the restricted solve,
/// and obey all three error bounds.
#[test]
fn criterion_4_guarantee_suite_small_instances() {
    let mut rng = seeds::rng_from(20260814);
    let opts = SolverOptions { kkt_tol: 1e-10, rel_tol: 1e-14, ..SolverOptions::default() };
    let mut tested = 0;
    let mut attempts = 0;
    let mut violations: Vec<String> = Vec::new();

    while tested < 200 {
        attempts += 1;
        assert!(attempts < 3000, "condition-satisfying draws should be common at small |Δ|");
        let m = rng.random_range(16..=64);
        let n = rng.random_range(2 * m / 3..m);
        let size_n = rng.random_range(1..=6);
        let size_delta = rng.random_range(0..=size_n.min(2));
        let size_delta_e = rng.random_range(0..=1);
        let mat = generate_sensing_matrix(n, m, &mut rng);
        let inst = ProblemInstance::draw(&mat, size_n, size_delta, size_delta_e, 100.0, 1e-4, &mut rng)
            .unwrap();
        let gamma = match bounds::gamma_star(&mat, inst.y.view(), &inst.partition) {
            Ok(gs) if gs > 0.0 => 1.001 * gs,
            _ => continue,
        };
        if !bounds::check_global_condition(&mat, inst.y.view(), &inst.partition, gamma).unwrap() {
            continue;
        }
        tested += 1;

        let p = &inst.partition;
        let global = solve_modified_bpdn(&mat, inst.y.view(), p.set_t(), gamma, &opts).unwrap();
        let restricted = solve_restricted(&mat, inst.y.view(), p, gamma, &opts).unwrap();
        let c = genie_ls(&mat, p.set_ne(), inst.y.view()).unwrap();

        let off_ne = (0..m)
            .filter(|j| p.set_ne().binary_search(j).is_err())
            .map(|j| global.b_hat[j].abs())
            .fold(0.0_f64, f64::max);
        let mismatch = inf_norm((&global.b_hat - &restricted.b_hat).view());
        let err_c = inf_norm((&global.b_hat - &c).view());
        let err_x_inf = inf_norm((&global.b_hat - &inst.x).view());
        let diff_x = &global.b_hat - &inst.x;
        let err_x_l2 = diff_x.dot(&diff_x).sqrt();

        let b6 = bounds::linf_bound(&mat, p.set_t(), p.set_delta(), gamma).unwrap();
        let b8 = bounds::linf_bound_with_noise(&mat, p, gamma, inf_norm(inst.w.view())).unwrap();
        let b10 = bounds::l2_bound(&mat, p, gamma, inst.w.dot(&inst.w).sqrt()).unwrap();

        let slop = |b: f64| b * 1e-9 + 1e-6;
        for (what, v, limit) in [
            ("off-support mass", off_ne, 1e-5),
            ("global/restricted gap", mismatch, 1e-5),
            ("ℓ∞ vs LS-fit bound", err_c, b6 + slop(b6)),
            ("ℓ∞ vs truth bound", err_x_inf, b8 + slop(b8)),
            ("ℓ2 vs truth bound", err_x_l2, b10 + slop(b10)),
        ] {
            if v > limit {
                violations.push(format!(
                    "instance {tested} (n={n}, m={m}, |Δ|={size_delta}): {what} {v:.3e} > {limit:.3e}"
                ));
            }
        }
    }
    let ok = violations.is_empty();
    report_line(&format!(
        "ACCEPTANCE 4: {} — uniqueness-regime guarantees on 200 certified instances \
         ({attempts} draws): {}",
        if ok { "PASS" } else { "FAIL" },
        if ok { "no violations".into() } else { violations.join("; ") }
    ));
    assert!(ok, "{} violation(s)", violations.len());
}

/// The iterative solver must reach the same objective value as an exhaustive
/// search over every active set and sign pattern, including with an empty
/// trusted set (plain ℓ1 penalty everywhere).
#[test]
fn criterion_5_solver_matches_exhaustive_oracle() {
    let mut rng = seeds::rng_from(515);
    let opts = tight();
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        // even draws exercise T = ∅; odd draws a nonempty trusted set
        let (m, size_t) = if i % 2 == 0 {
            (rng.random_range(6..=10), 0)
        } else {
            let m: usize = rng.random_range(6..=12);
            (m, rng.random_range(m.saturating_sub(10).max(1)..=3))
        };
        let n = rng.random_range(4..=10);
        let mat = generate_sensing_matrix(n, m, &mut rng);
        let all: Vec<usize> = (0..m).collect();
        let set_t = sample_subset(&all, size_t, &mut rng);

        let spikes = sample_subset(&all, rng.random_range(1..=3), &mut rng);
        let mut x = Array1::zeros(m);
        for &j in &spikes {
            x[j] = 2.0 * rng.sample::<f64, _>(StandardNormal);
        }
        let w = Array1::from_iter((0..n).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)));
        let y = mat.as_array().dot(&x) + &w;

        let gmax = inf_norm(mat.as_array().t().dot(&y).view());
        let gamma = (0.05 + 0.85 * rng.random::<f64>()) * gmax;

        let sol = solve_modified_bpdn(&mat, y.view(), &set_t, gamma, &opts).unwrap();
        let oracle = common::oracle_min(mat.as_array(), y.view(), &set_t, gamma);
        let gap = (sol.objective - oracle.objective).abs() / oracle.objective.max(1.0);
        worst = worst.max(gap);
        assert!(
            gap <= 1e-8,
            "instance {i} (n={n}, m={m}, |T|={size_t}, γ={gamma:.3e}): solver {:.12e} vs oracle {:.12e}",
            sol.objective,
            oracle.objective
        );
    }
    report_line(&format!(
        "ACCEPTANCE 5: PASS — solver = exhaustive-search objective on 100 instances \
         (50 of them with empty trusted set), worst gap {worst:.2e} (limit 1e-8)"
    ));
}

/// The optimality system of the restricted program pins down the gap to the
/// oracle LS fit in closed form: a unit-box dual vector on Δ and two
/// block-solves reproducing c − b̃. Both are checked from the solver output.
#[test]
fn criterion_6_restricted_subgradient_identities() {
    let mut rng = seeds::rng_from(66);
    let opts = tight();
    let mut worst_g: f64 = 0.0;
    let mut worst_rel: f64 = 0.0;
    for i in 0..100 {
        let m = rng.random_range(16..=48);
        let n = rng.random_range(m / 2..m);
        let size_n = rng.random_range(1..=5);
        let size_delta = rng.random_range(1..=size_n);
        let size_delta_e = rng.random_range(0..=1);
        let mat = generate_sensing_matrix(n, m, &mut rng);
        let inst = ProblemInstance::draw(&mat, size_n, size_delta, size_delta_e, 100.0, 1e-4, &mut rng)
            .unwrap();
        let p = &inst.partition;
        let gamma =
            (0.05 + 0.45 * rng.random::<f64>()) * inf_norm(mat.as_array().t().dot(&inst.y).view());

        let SolverResult { b_hat: b_tilde, .. } =
            solve_restricted(&mat, inst.y.view(), p, gamma, &opts).unwrap();
        let c = genie_ls(&mat, p.set_ne(), inst.y.view()).unwrap();

        // dual vector on Δ realized by the solution: g_Δ = A_Δ'(y − A b̃)/γ
        let resid = &inst.y - &mat.as_array().dot(&b_tilde);
        let a_delta = mat.columns(p.set_delta());
        let g_delta = a_delta.t().dot(&resid) / gamma;
        worst_g = worst_g.max(inf_norm(g_delta.view()));
        assert!(
            inf_norm(g_delta.view()) <= 1.0 + 1e-6,
            "instance {i}: ‖g_Δ‖∞ = {:.9}",
            inf_norm(g_delta.view())
        );

        // two-block closed form for d = c − b̃ from g_Δ alone
        let proj = bounds::complement_projector(&mat, p.set_t()).unwrap();
        let gram = a_delta.t().dot(&proj).dot(&a_delta);
        let d_delta = gram.inv().unwrap().dot(&g_delta) * gamma;
        let d = &c - &b_tilde;
        let mut rebuilt = Array1::zeros(m);
        for (k, &j) in p.set_delta().iter().enumerate() {
            rebuilt[j] = d_delta[k];
        }
        if !p.set_t().is_empty() {
            let a_t = mat.columns(p.set_t());
            let d_t = a_t
                .t()
                .dot(&a_t)
                .inv()
                .unwrap()
                .dot(&a_t.t().dot(&a_delta).dot(&d_delta))
                * -1.0;
            for (k, &j) in p.set_t().iter().enumerate() {
                rebuilt[j] = d_t[k];
            }
        }
        let rel = inf_norm((&rebuilt - &d).view()) / inf_norm(d.view()).max(1e-9);
        worst_rel = worst_rel.max(rel);
        assert!(rel <= 1e-6, "instance {i}: closed-form gap rel err {rel:.3e}");
    }
    report_line(&format!(
        "ACCEPTANCE 6: PASS — 100 restricted solves: worst ‖g_Δ‖∞ = {worst_g:.9} (limit 1+1e-6), \
         worst closed-form reconstruction error {worst_rel:.2e} (limit 1e-6 relative)"
    ));
}

/// The isometry-constant form of the ℓ2 bound can only lose information, so
/// with the exact constants plugged in it must dominate the matrix-norm form.
#[test]
fn criterion_7_isometry_chain_domination() {
    let mut rng = seeds::rng_from(77);
    let mut checked = 0;
    let mut attempts = 0;
    let mut worst_margin = f64::INFINITY;
    while checked < 50 {
        attempts += 1;
        assert!(attempts < 1000, "applicable isometry draws should be common at these sizes");
        // m ≤ 10 keeps the subset enumeration exact; the worst-case constants
        // only stay below the applicability threshold with plenty of rows
        let m = rng.random_range(8..=10);
        let n = rng.random_range(60..=120);
        let size_delta = rng.random_range(1..=2);
        let size_delta_e = rng.random_range(0..=1);
        let mat = generate_sensing_matrix(n, m, &mut rng);
        let p = generate_partition(m, 3, size_delta, size_delta_e, &mut rng).unwrap();

        let delta_t = bounds::exact_ric(&mat, p.set_t().len()).unwrap();
        let delta_delta = bounds::exact_ric(&mat, size_delta).unwrap();
        let delta_ne = bounds::exact_ric(&mat, p.set_ne().len()).unwrap();
        let theta = bounds::exact_roc(&mat, p.set_t().len(), size_delta).unwrap();
        let rip = match bounds::rip_l2_bound(delta_t, delta_delta, delta_ne, theta, size_delta, 1.0, 0.0)
        {
            Ok(v) => v,
            Err(_) => continue, // isometry denominator closed; draw again
        };
        checked += 1;
        let exact = bounds::l2_bound(&mat, &p, 1.0, 0.0).unwrap();
        worst_margin = worst_margin.min(rip - exact);
        assert!(
            rip >= exact * (1.0 - 1e-9),
            "draw {checked}: isometry form {rip:.6e} below matrix-norm form {exact:.6e}"
        );
    }
    report_line(&format!(
        "ACCEPTANCE 7: PASS — isometry-constant ℓ2 bound dominates the matrix-norm form on \
         50 applicable draws ({attempts} attempts), smallest margin {worst_margin:.3e}"
    ));
}

/// Identical configurations must serialize byte-identical artifacts no matter
/// how many worker threads carry the trials.
#[test]
fn criterion_8_deterministic_outputs_any_worker_count() {
    let dir = tmp_dir("c8");
    let cfg_at = |out: PathBuf| {
        sweep_config(15, vec![205, 307, 512], vec![0, 5, 10, 15], vec![0], 3e-4, out)
    };
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let pooled = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let cfg_a = cfg_at(dir.join("single/run"));
    let cfg_b = cfg_at(dir.join("pooled/run"));
    single.install(|| run_experiment(&cfg_a)).unwrap();
    pooled.install(|| run_experiment(&cfg_b)).unwrap();

    let mut compared = 0;
    for suffix in
        [".trials.csv", ".summary.csv", ".n205.de0.dat", ".n307.de0.dat", ".n512.de0.dat"]
    {
        let a = fs::read(dir.join(format!("single/run{suffix}"))).unwrap();
        let b = fs::read(dir.join(format!("pooled/run{suffix}"))).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "artifact run{suffix} differs between worker counts");
        compared += 1;
    }
    report_line(&format!(
        "ACCEPTANCE 8: PASS — {compared} artifacts byte-identical between 1-thread and \
         4-thread runs of the full sweep"
    ));
}
