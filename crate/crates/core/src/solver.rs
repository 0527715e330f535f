//! Solvers for the partially-penalized recovery program
//!
//! ```text
//! L(b) = 1/2 ||y - A b||_2^2 + gamma ||b_{T^c}||_1
//! ```
//!
//! over the full space, over vectors supported on `N_e` (the restricted
//! variant), and the genie-aided least squares estimate on `N_e`. The
//! iterative pieces use accelerated proximal gradient descent with a
//! monotone restart: a momentum step is kept only if it does not increase
//! the objective, otherwise the momentum is reset and the method falls back
//! to a plain proximal-gradient step, whose descent is guaranteed. The
//! gradient step is the fixed `1/L` with `L = ||A||_2^2` from power
//! iteration; there is deliberately no step-size knob.

use ndarray::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{spectral_sq_norm, ColumnFactor};
use crate::model::{validate_index_set, SensingMatrix, SupportPartition};

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop when the accepted iterate moves less than this, relative to its
    /// own size (the optimality flag still comes from the KKT residual).
    pub rel_tol: f64,
    /// Declare convergence when the KKT residual drops below this.
    pub kkt_tol: f64,
    /// Record the objective at the accepted iterate of every iteration.
    pub trace_objective: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 50_000,
            rel_tol: 1e-10,
            kkt_tol: 1e-6,
            trace_objective: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub b_hat: Array1<f64>,
    pub iters: usize,
    /// L(b_hat), tracked incrementally; matches a recompute to 1e-10 relative.
    pub objective: f64,
    /// Worst violation of the optimality system at `b_hat`.
    pub kkt_residual: f64,
    pub converged: bool,
    /// Non-empty only when `trace_objective` was set.
    pub objective_trace: Vec<f64>,
}

/// Default dead-band below which a coordinate counts as zero in optimality
/// checks: 1e-7·‖b‖_∞ with an absolute floor of 1e-12.
pub fn default_zero_tol(b: ArrayView1<f64>) -> f64 {
    (1e-7 * inf_norm(b)).max(1e-12)
}

fn inf_norm(v: ArrayView1<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// L(b) recomputed from scratch for the trusted set `set_t`.
pub fn objective_value(
    mat_a: &SensingMatrix,
    y: ArrayView1<f64>,
    set_t: &[usize],
    gamma: f64,
    b: ArrayView1<f64>,
) -> f64 {
    let t_mask = mask_from_set(set_t, mat_a.m());
    let r = &mat_a.as_array().dot(&b) - &y;
    0.5 * r.dot(&r) + gamma * penalty(b, &t_mask)
}

fn penalty(b: ArrayView1<f64>, t_mask: &[bool]) -> f64 {
    b.iter().zip(t_mask).filter(|(_, &in_t)| !in_t).map(|(v, _)| v.abs()).sum()
}

fn mask_from_set(set: &[usize], m: usize) -> Vec<bool> {
    let mut mask = vec![false; m];
    for &i in set {
        mask[i] = true;
    }
    mask
}

/// Worst violation of the optimality system of L at `b`, with `g = A'(Ab−y)`:
/// `|g_i|` on the trusted set; `|g_i + gamma·sign(b_i)|` off it where
/// `|b_i| > zero_tol`; `max(0, |g_i| − gamma)` where `|b_i| ≤ zero_tol`.
/// Coordinates inside the dead band never consult `sign(b_i)`.
pub fn kkt_residual(
    mat_a: &SensingMatrix,
    y: ArrayView1<f64>,
    set_t: &[usize],
    gamma: f64,
    b: ArrayView1<f64>,
    zero_tol: f64,
) -> f64 {
    assert_eq!(y.len(), mat_a.n(), "y length must match matrix rows");
    assert_eq!(b.len(), mat_a.m(), "b length must match matrix columns");
    assert!(gamma >= 0.0 && zero_tol >= 0.0);
    let t_mask = mask_from_set(set_t, mat_a.m());
    let r = &mat_a.as_array().dot(&b) - &y;
    let g = mat_a.as_array().t().dot(&r);
    kkt_from_grad(g.view(), b, &t_mask, gamma, zero_tol)
}

fn kkt_from_grad(
    g: ArrayView1<f64>,
    b: ArrayView1<f64>,
    t_mask: &[bool],
    gamma: f64,
    zero_tol: f64,
) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..b.len() {
        let v = if t_mask[i] {
            g[i].abs()
        } else if b[i] > zero_tol {
            (g[i] + gamma).abs()
        } else if b[i] < -zero_tol {
            (g[i] - gamma).abs()
        } else {
            (g[i].abs() - gamma).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Minimizes L(b) over all of R^m.
///
/// Non-convergence within `max_iters` is not an error: the best iterate
/// comes back with `converged = false` and the caller decides.
pub fn solve_modified_bpdn(
    mat_a: &SensingMatrix,
    y: ArrayView1<f64>,
    set_t: &[usize],
    gamma: f64,
    opts: &SolverOptions,
) -> Result<SolverResult> {
    if !(gamma >= 0.0) {
        return Err(Error::Argument(format!("gamma must be nonnegative, got {gamma}")));
    }
    if y.len() != mat_a.n() {
        return Err(Error::Argument(format!(
            "y has length {} but the matrix has {} rows",
            y.len(),
            mat_a.n()
        )));
    }
    let set_t = validate_index_set(set_t, mat_a.m(), "set_t")?;
    let t_mask = mask_from_set(&set_t, mat_a.m());
    Ok(fista(mat_a.as_array(), y, &t_mask, gamma, mat_a.op_sq_norm(), opts))
}

/// Minimizes L(b) over vectors supported on `partition.set_ne()`. The
/// iteration runs on the extracted column block, so columns outside `N_e`
/// never enter; the result is embedded back into an m-vector.
///
/// The reported KKT residual certifies optimality of the restricted program.
pub fn solve_restricted(
    mat_a: &SensingMatrix,
    y: ArrayView1<f64>,
    partition: &SupportPartition,
    gamma: f64,
    opts: &SolverOptions,
) -> Result<SolverResult> {
    if !(gamma >= 0.0) {
        return Err(Error::Argument(format!("gamma must be nonnegative, got {gamma}")));
    }
    if y.len() != mat_a.n() {
        return Err(Error::Argument(format!(
            "y has length {} but the matrix has {} rows",
            y.len(),
            mat_a.n()
        )));
    }
    let set_ne = partition.set_ne();
    let block = mat_a.columns(set_ne);
    // full-column-rank gate; the factor itself is not otherwise needed
    ColumnFactor::new(&block, "A_Ne")?;
    let t_mask_block: Vec<bool> = set_ne
        .iter()
        .map(|i| partition.set_t().binary_search(i).is_ok())
        .collect();
    let l = spectral_sq_norm(block.view());
    let restricted = fista(block.view(), y, &t_mask_block, gamma, l, opts);
    let mut b_hat = Array1::zeros(mat_a.m());
    for (k, &i) in set_ne.iter().enumerate() {
        b_hat[i] = restricted.b_hat[k];
    }
    Ok(SolverResult { b_hat, ..restricted })
}

/// Least squares on the oracle column set: `c` with
/// `c_{N_e} = (A_Ne' A_Ne)^{-1} A_Ne' y` and zero elsewhere.
pub fn genie_ls(
    mat_a: &SensingMatrix,
    set_ne: &[usize],
    y: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    if y.len() != mat_a.n() {
        return Err(Error::Argument(format!(
            "y has length {} but the matrix has {} rows",
            y.len(),
            mat_a.n()
        )));
    }
    let set_ne = validate_index_set(set_ne, mat_a.m(), "set_ne")?;
    let block = mat_a.columns(&set_ne);
    let factor = ColumnFactor::new(&block, "A_Ne")?;
    let coeffs = factor.pinv_apply(y);
    let mut c = Array1::zeros(mat_a.m());
    for (k, &i) in set_ne.iter().enumerate() {
        c[i] = coeffs[k];
    }
    Ok(c)
}

/// Accelerated proximal gradient with monotone restart, on whatever column
/// span `a` carries. `t_mask[j]` marks penalty-free coordinates.
fn fista(
    a: ArrayView2<f64>,
    y: ArrayView1<f64>,
    t_mask: &[bool],
    gamma: f64,
    lipschitz: f64,
    opts: &SolverOptions,
) -> SolverResult {
    crate::linalg::pin_blas_single_thread();
    let dim = a.ncols();
    let step = 1.0 / lipschitz.max(f64::MIN_POSITIVE);
    let thresh = gamma * step;

    let mut x = Array1::zeros(dim);
    let mut x_prev = x.clone();
    let mut ax = Array1::zeros(y.len());
    let mut ax_prev = ax.clone();
    let mut obj_x = 0.5 * y.dot(&y);
    let mut t = 1.0_f64;
    let mut t_prev = 1.0_f64;

    let mut trace = Vec::new();
    if opts.trace_objective {
        trace.push(obj_x);
    }

    // the zero vector may already be optimal
    let g0 = -a.t().dot(&y);
    let mut kkt = kkt_from_grad(g0.view(), x.view(), t_mask, gamma, default_zero_tol(x.view()));
    let mut converged = kkt <= opts.kkt_tol;
    let mut iters = 0;

    if !converged {
        for iter in 1..=opts.max_iters {
            iters = iter;
            // momentum point v and its image under A, by linear combination
            let beta = (t_prev - 1.0) / t;
            let v = &x + &((&x - &x_prev) * beta);
            let av = &ax + &((&ax - &ax_prev) * beta);
            let grad_v = a.t().dot(&(&av - &y));
            let z = prox(&(&v - &(grad_v * step)), t_mask, thresh);
            let az = a.dot(&z);
            let rz = &az - &y;
            let obj_z = 0.5 * rz.dot(&rz) + gamma * penalty(z.view(), t_mask);

            if obj_z <= obj_x {
                x_prev = std::mem::replace(&mut x, z);
                ax_prev = std::mem::replace(&mut ax, az);
                obj_x = obj_z;
                t_prev = t;
                t = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());

                let g = a.t().dot(&rz);
                kkt = kkt_from_grad(
                    g.view(),
                    x.view(),
                    t_mask,
                    gamma,
                    default_zero_tol(x.view()),
                );
                if opts.trace_objective {
                    trace.push(obj_x);
                }
                if kkt <= opts.kkt_tol {
                    converged = true;
                    break;
                }
                let move_inf = x
                    .iter()
                    .zip(x_prev.iter())
                    .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                if move_inf <= opts.rel_tol * inf_norm(x.view()).max(1.0) {
                    break; // stalled; optimality flag stays with the KKT check
                }
            } else {
                // momentum overshot: restart, next step is plain descent
                x_prev = x.clone();
                ax_prev = ax.clone();
                t_prev = 1.0;
                t = 1.0;
                if opts.trace_objective {
                    trace.push(obj_x);
                }
            }
        }
    }

    SolverResult {
        objective: obj_x,
        kkt_residual: kkt,
        converged,
        iters,
        objective_trace: trace,
        b_hat: x,
    }
}

fn prox(v: &Array1<f64>, t_mask: &[bool], thresh: f64) -> Array1<f64> {
    Array1::from_iter(v.iter().zip(t_mask).map(|(&vi, &in_t)| {
        if in_t {
            vi
        } else if vi > thresh {
            vi - thresh
        } else if vi < -thresh {
            vi + thresh
        } else {
            0.0
        }
    }))
}
