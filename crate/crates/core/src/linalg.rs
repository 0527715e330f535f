//! Thin layer over LAPACK (via ndarray-linalg) shared by the solver and the
//! bound computations. Everything here is deterministic: OpenBLAS is pinned
//! to one thread on first use, so blocked factorizations and GEMM never
//! reorder their reductions with the machine's thread count.

use ndarray::prelude::*;
use ndarray_linalg::triangular::{Diag, SolveTriangular};
use ndarray_linalg::{EigValsh, QR, SVD, UPLO};

use crate::error::{Error, Result};

extern "C" {
    fn openblas_set_num_threads(num: std::os::raw::c_int);
}

static BLAS_PIN: std::sync::Once = std::sync::Once::new();

pub(crate) fn pin_blas_single_thread() {
    BLAS_PIN.call_once(|| unsafe { openblas_set_num_threads(1) });
}

/// Gram condition numbers above this are treated as rank deficiency.
pub(crate) const GRAM_COND_LIMIT: f64 = 1e12;

/// Thin QR of a column block, with the block's extreme singular values for
/// conditioning checks. All Gram-matrix solves and inverses go through this.
pub(crate) struct ColumnFactor {
    q: Array2<f64>,
    r: Array2<f64>,
    smin: f64,
    smax: f64,
}

impl ColumnFactor {
    /// Factors an n × k block; errors when the block cannot be trusted to
    /// have full column rank (k > n, or Gram condition above 1e12).
    pub fn new(block: &Array2<f64>, context: &str) -> Result<Self> {
        pin_blas_single_thread();
        let (n, k) = block.dim();
        if k == 0 {
            return Ok(ColumnFactor {
                q: Array2::zeros((n, 0)),
                r: Array2::zeros((0, 0)),
                smin: 1.0,
                smax: 1.0,
            });
        }
        if k > n {
            return Err(Error::Singular {
                context: format!("{context}: {k} columns in dimension {n}"),
                cond: f64::INFINITY,
            });
        }
        let (q, r) = block
            .qr()
            .map_err(|e| Error::Argument(format!("{context}: QR failed: {e}")))?;
        // singular values of R are those of the block
        let (_, s, _) = r
            .svd(false, false)
            .map_err(|e| Error::Argument(format!("{context}: SVD failed: {e}")))?;
        let smax = s[0];
        let smin = s[s.len() - 1];
        let gram_cond = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
        if !gram_cond.is_finite() || gram_cond > GRAM_COND_LIMIT {
            return Err(Error::Singular { context: context.to_string(), cond: gram_cond });
        }
        Ok(ColumnFactor { q, r, smin, smax })
    }

    pub fn k(&self) -> usize {
        self.r.nrows()
    }

    pub fn q(&self) -> &Array2<f64> {
        &self.q
    }

    /// Smallest singular value of the factored block.
    pub fn smin(&self) -> f64 {
        self.smin
    }

    #[allow(dead_code)]
    pub fn smax(&self) -> f64 {
        self.smax
    }

    /// Least-squares coefficients: (B'B)^{-1} B' y = R^{-1} Q' y.
    pub fn pinv_apply(&self, y: ArrayView1<f64>) -> Array1<f64> {
        if self.k() == 0 {
            return Array1::zeros(0);
        }
        let qty = self.q.t().dot(&y);
        self.solve_upper(&qty)
    }

    /// (B'B)^{-1} B' W column by column, as a k × w matrix.
    pub fn pinv_apply_mat(&self, w: ArrayView2<f64>) -> Array2<f64> {
        if self.k() == 0 {
            return Array2::zeros((0, w.ncols()));
        }
        let qtw = self.q.t().dot(&w);
        self.solve_upper_mat(&qtw)
    }

    /// Explicit (B'B)^{-1} = R^{-1} R^{-T}.
    pub fn gram_inverse(&self) -> Array2<f64> {
        let k = self.k();
        if k == 0 {
            return Array2::zeros((0, 0));
        }
        let rinv = self.solve_upper_mat(&Array2::eye(k));
        rinv.dot(&rinv.t())
    }

    /// Explicit pseudoinverse (B'B)^{-1} B' = R^{-1} Q', k × n.
    pub fn pinv_matrix(&self) -> Array2<f64> {
        if self.k() == 0 {
            return Array2::zeros((0, self.q.nrows()));
        }
        self.solve_upper_mat(&self.q.t().to_owned())
    }

    fn solve_upper(&self, v: &Array1<f64>) -> Array1<f64> {
        self.r
            .solve_triangular(UPLO::Upper, Diag::NonUnit, v)
            .expect("upper solve on conditioned factor")
    }

    fn solve_upper_mat(&self, w: &Array2<f64>) -> Array2<f64> {
        self.r
            .solve_triangular(UPLO::Upper, Diag::NonUnit, w)
            .expect("upper solve on conditioned factor")
    }
}

/// Matrix infinity norm: max absolute row sum. Zero for empty matrices.
pub(crate) fn op_inf_norm(a: ArrayView2<f64>) -> f64 {
    a.rows()
        .into_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Spectral norm of a small dense matrix via a symmetric eigensolve of the
/// Gram matrix on its shorter side.
pub(crate) fn spectral_norm_small(a: ArrayView2<f64>) -> f64 {
    pin_blas_single_thread();
    let (n, m) = a.dim();
    if n == 0 || m == 0 {
        return 0.0;
    }
    let g = if m <= n { a.t().dot(&a) } else { a.dot(&a.t()) };
    let vals = EigValsh::eigvalsh(&g, UPLO::Lower).expect("eigensolve of small Gram matrix");
    vals[vals.len() - 1].max(0.0).sqrt()
}

/// Extreme eigenvalues of a small symmetric matrix.
pub(crate) fn sym_eig_range(g: &Array2<f64>) -> (f64, f64) {
    pin_blas_single_thread();
    if g.nrows() == 0 {
        return (0.0, 0.0);
    }
    let vals = EigValsh::eigvalsh(g, UPLO::Lower).expect("eigensolve of small symmetric matrix");
    (vals[0], vals[vals.len() - 1])
}

/// Squared spectral norm of `a` by power iteration on the smaller-side Gram
/// operator, run to 1e-10 relative change (deterministic start vector). The
/// result is inflated by 1e-9 relative so downstream 1/L step sizes stay on
/// the safe side of the true Lipschitz constant.
pub(crate) fn spectral_sq_norm(a: ArrayView2<f64>) -> f64 {
    pin_blas_single_thread();
    let (n, m) = a.dim();
    if n == 0 || m == 0 {
        return 0.0;
    }
    let tall = m <= n; // iterate on the smaller dimension
    let dim = n.min(m);
    let mut v = Array1::from_shape_fn(dim, |j| 1.0 + 0.5 * (j as f64) / (dim as f64));
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm);
    let mut lambda = 0.0;
    for _ in 0..20_000 {
        let z = if tall {
            let av = a.dot(&v);
            a.t().dot(&av)
        } else {
            let atv = a.t().dot(&v);
            a.dot(&atv)
        };
        let lambda_new = v.dot(&z);
        let znorm = z.dot(&z).sqrt();
        if znorm == 0.0 {
            return 0.0; // zero operator
        }
        v = z / znorm;
        if (lambda_new - lambda).abs() <= 1e-10 * lambda_new.abs() {
            lambda = lambda_new;
            break;
        }
        lambda = lambda_new;
    }
    lambda.max(0.0) * (1.0 + 1e-9)
}
