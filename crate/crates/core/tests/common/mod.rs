#![allow(dead_code)]

use ndarray::prelude::*;
use ndarray_linalg::Solve;
use std::io::Write;

/// Prints a line both to the real stderr (bypassing libtest's capture, so it
/// shows up even for passing tests) and to captured stdout (so it is attached
/// to the failure report when an assertion fires).
pub fn report_line(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
    println!("{line}");
}

pub fn inf_norm(v: ArrayView1<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn select_columns(a: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), idx.len()));
    for (k, &j) in idx.iter().enumerate() {
        out.column_mut(k).assign(&a.column(j));
    }
    out
}

pub struct OracleSolution {
    pub objective: f64,
    pub b: Array1<f64>,
}

/// Global minimizer of ½‖y − Ab‖² + γ‖b_{T^c}‖₁ by exhaustive search over
/// active sets: every subset F of the penalized coordinates and every sign
/// pattern on F yields one stationarity system
///
///   A_S' A_S b_S = A_S' y − γ e,   S = T ∪ F,  e = 0 on T, signs on F,
///
/// and a solution is kept when the computed signs agree with the assumed ones
/// and every inactive coordinate satisfies |a_ω'(Ab − y)| ≤ γ. Convexity makes
/// any consistent stationary point optimal; the minimum over candidates is
/// returned anyway as a numerical guard. Cost is 3^|T^c| small solves, so
/// callers keep |T^c| ≤ 16.
pub fn oracle_min(
    a: ArrayView2<f64>,
    y: ArrayView1<f64>,
    set_t: &[usize],
    gamma: f64,
) -> OracleSolution {
    let m = a.ncols();
    let pen: Vec<usize> = (0..m).filter(|j| !set_t.contains(j)).collect();
    assert!(pen.len() <= 16, "oracle is exponential in |T^c| = {}", pen.len());

    let mut best: Option<OracleSolution> = None;
    for fs in 0u32..(1u32 << pen.len()) {
        let active: Vec<usize> = pen
            .iter()
            .enumerate()
            .filter(|(i, _)| fs >> i & 1 == 1)
            .map(|(_, &j)| j)
            .collect();
        let k = active.len();
        for signs in 0u32..(1u32 << k) {
            let sigma: Vec<f64> =
                (0..k).map(|i| if signs >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
            if let Some(cand) = stationary_point(a, y, set_t, &active, &sigma, gamma) {
                if best.as_ref().is_none_or(|b| cand.objective < b.objective) {
                    best = Some(cand);
                }
            }
        }
    }
    best.expect("no consistent stationary point found")
}

fn stationary_point(
    a: ArrayView2<f64>,
    y: ArrayView1<f64>,
    set_t: &[usize],
    active: &[usize],
    sigma: &[f64],
    gamma: f64,
) -> Option<OracleSolution> {
    let m = a.ncols();
    let support: Vec<usize> = set_t.iter().chain(active.iter()).copied().collect();

    let mut b = Array1::zeros(m);
    if !support.is_empty() {
        let a_s = select_columns(a, &support);
        let gram = a_s.t().dot(&a_s);
        let mut rhs = a_s.t().dot(&y);
        for (i, &s) in sigma.iter().enumerate() {
            rhs[set_t.len() + i] -= gamma * s;
        }
        let b_s = gram.solve(&rhs).ok()?;
        for (i, &s) in sigma.iter().enumerate() {
            if b_s[set_t.len() + i] * s < -1e-9 {
                return None;
            }
        }
        for (&j, &v) in support.iter().zip(b_s.iter()) {
            b[j] = v;
        }
    }

    let r = a.dot(&b) - &y;
    for j in 0..m {
        if !support.contains(&j) && a.column(j).dot(&r).abs() > gamma * (1.0 + 1e-9) + 1e-12 {
            return None;
        }
    }

    let penalty: f64 = (0..m).filter(|j| !set_t.contains(j)).map(|j| b[j].abs()).sum();
    Some(OracleSolution { objective: 0.5 * r.dot(&r) + gamma * penalty, b })
}
