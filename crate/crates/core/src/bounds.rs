//! Computable reconstruction-error bounds for the partially-supported
//! penalized program, the sufficient condition under which its minimizer
//! stays on the oracle column set `N_e = T ∪ Δ`, the critical penalty weight
//! `gamma*`, and exact (exhaustive) restricted isometry / orthogonality
//! constants for small matrices.
//!
//! Notation used throughout: `A_S` is the column block of `A` on the index
//! set `S`, and `M = I − A_T (A_T' A_T)^{-1} A_T'` projects onto the
//! orthogonal complement of the trusted columns. Empty sets follow the
//! natural limits: `Δ = ∅` makes every γ-term 0 and the condition factor 1;
//! `T = ∅` makes `M = I` and drops the T-dependent norm term.

use std::collections::BTreeMap;

use ndarray::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{op_inf_norm, spectral_norm_small, sym_eig_range, ColumnFactor};
use crate::model::{SensingMatrix, SupportPartition};

/// Everything the sufficient condition and the two error bounds produce for
/// one (matrix, measurement, partition, γ) tuple.
///
/// `applicable` is exactly `condition_factor > 0`; `gamma_star` is
/// `lhs_condition / condition_factor` and only defined when applicable.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub linf_bound: f64,
    pub l2_bound: f64,
    pub condition_factor: f64,
    pub lhs_condition: f64,
    pub gamma_star: Option<f64>,
    pub applicable: bool,
}

/// Shared factorizations for one (matrix, partition) pair; every bound
/// ingredient is a cheap question against these.
pub(crate) struct Factors<'a> {
    mat: &'a SensingMatrix,
    partition: &'a SupportPartition,
    t_factor: ColumnFactor,
    p_factor: ColumnFactor, // factor of M·A_Δ, whose Gram is A_Δ' M A_Δ
    ne_factor: ColumnFactor,
    ne_block: Array2<f64>,
    d_block: Array2<f64>,
}

impl<'a> Factors<'a> {
    pub fn new(mat: &'a SensingMatrix, partition: &'a SupportPartition) -> Result<Self> {
        if partition.m() != mat.m() {
            return Err(Error::Argument(format!(
                "partition is over {} coordinates but the matrix has {} columns",
                partition.m(),
                mat.m()
            )));
        }
        let t_block = mat.columns(partition.set_t());
        let t_factor = ColumnFactor::new(&t_block, "A_T")?;
        let d_block = mat.columns(partition.set_delta());
        let p_block = project_out(&t_factor, &d_block);
        let p_factor = ColumnFactor::new(&p_block, "M·A_Delta")?;
        let ne_block = mat.columns(partition.set_ne());
        let ne_factor = ColumnFactor::new(&ne_block, "A_Ne")?;
        Ok(Factors { mat, partition, t_factor, p_factor, ne_factor, ne_block, d_block })
    }

    /// ‖A'(y − A_Ne c_Ne)‖_∞ with c the least-squares fit on N_e.
    pub fn lhs_condition(&self, y: ArrayView1<f64>) -> f64 {
        let c = self.ne_factor.pinv_apply(y);
        let residual = &y - &self.ne_block.dot(&c);
        let corr = self.mat.as_array().t().dot(&residual);
        corr.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// 1 − max_{ω ∉ N_e} ‖(A_Δ' M A_Δ)^{-1} A_Δ' M A_ω‖_1.
    pub fn condition_factor(&self) -> f64 {
        if self.partition.set_delta().is_empty() {
            return 1.0;
        }
        // (A_Δ' M A_Δ)^{-1} A_Δ' M A_ω = pinv(M·A_Δ)·A_ω since M is an
        // orthogonal projector
        let z = self.p_factor.pinv_apply_mat(self.mat.as_array());
        let ne = self.partition.set_ne();
        let mut worst = 0.0_f64;
        for omega in 0..self.mat.m() {
            if ne.binary_search(&omega).is_ok() {
                continue;
            }
            let l1: f64 = z.column(omega).iter().map(|v| v.abs()).sum();
            worst = worst.max(l1);
        }
        1.0 - worst
    }

    /// Coefficient of γ in the l∞ bound:
    /// max(‖(A_T'A_T)^{-1}A_T'A_Δ(A_Δ'MA_Δ)^{-1}‖_∞, ‖(A_Δ'MA_Δ)^{-1}‖_∞).
    pub fn linf_gamma_coeff(&self) -> f64 {
        let b = self.p_factor.gram_inverse();
        let term_delta = op_inf_norm(b.view());
        let g = self.t_factor.pinv_apply_mat(self.d_block.view());
        let term_t = op_inf_norm(g.dot(&b).view());
        term_t.max(term_delta)
    }

    /// ‖(A_Ne'A_Ne)^{-1}A_Ne'‖_∞, the multiplier of ‖w‖_∞.
    pub fn linf_noise_coeff(&self) -> f64 {
        op_inf_norm(self.ne_factor.pinv_matrix().view())
    }

    /// Coefficient of γ in the l2 bound:
    /// √|Δ|·√(‖(A_T'A_T)^{-1}A_T'A_Δ(A_Δ'MA_Δ)^{-1}‖_2² + ‖(A_Δ'MA_Δ)^{-1}‖_2²).
    pub fn l2_gamma_coeff(&self) -> f64 {
        let size_delta = self.partition.set_delta().len();
        if size_delta == 0 {
            return 0.0;
        }
        // ‖(P'P)^{-1}‖_2 = 1/σ_min(P)², exact from the factorization
        let term_delta = 1.0 / self.p_factor.smin().powi(2);
        let term_t = if self.partition.set_t().is_empty() {
            0.0
        } else {
            let b = self.p_factor.gram_inverse();
            let g = self.t_factor.pinv_apply_mat(self.d_block.view());
            spectral_norm_small(g.dot(&b).view())
        };
        (size_delta as f64).sqrt() * term_t.hypot(term_delta)
    }

    /// ‖(A_Ne'A_Ne)^{-1}A_Ne'‖_2 = 1/σ_min(A_Ne), the multiplier of ‖w‖_2.
    pub fn l2_noise_coeff(&self) -> f64 {
        if self.partition.set_ne().is_empty() {
            0.0
        } else {
            1.0 / self.ne_factor.smin()
        }
    }

    pub fn gamma_star(&self, y: ArrayView1<f64>) -> Result<f64> {
        let cf = self.condition_factor();
        if cf <= 0.0 {
            return Err(Error::NotApplicable(format!(
                "condition factor {cf:.6e} is nonpositive, gamma* undefined"
            )));
        }
        Ok(self.lhs_condition(y) / cf)
    }
}

fn project_out(t_factor: &ColumnFactor, block: &Array2<f64>) -> Array2<f64> {
    if t_factor.k() == 0 {
        return block.clone();
    }
    let qt_b = t_factor.q().t().dot(block);
    block - &t_factor.q().dot(&qt_b)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= 0.0) {
        return Err(Error::Argument(format!("gamma must be nonnegative, got {gamma}")));
    }
    Ok(())
}

fn check_norm(value: f64, name: &str) -> Result<()> {
    if !(value >= 0.0) {
        return Err(Error::Argument(format!("{name} must be nonnegative, got {value}")));
    }
    Ok(())
}

/// `M = I − A_T (A_T' A_T)^{-1} A_T'`, the orthogonal projector onto the
/// complement of the trusted column span. Identity for an empty `set_t`.
pub fn complement_projector(mat_a: &SensingMatrix, set_t: &[usize]) -> Result<Array2<f64>> {
    let set_t = crate::model::validate_index_set(set_t, mat_a.m(), "set_t")?;
    let t_block = mat_a.columns(&set_t);
    let f = ColumnFactor::new(&t_block, "A_T")?;
    let mut proj = Array2::eye(mat_a.n());
    if f.k() > 0 {
        proj = proj - f.q().dot(&f.q().t());
    }
    Ok(proj)
}

/// l∞ error bound between the restricted minimizer and the genie
/// least-squares estimate:
/// γ·max(‖(A_T'A_T)^{-1}A_T'A_Δ(A_Δ'MA_Δ)^{-1}‖_∞, ‖(A_Δ'MA_Δ)^{-1}‖_∞).
/// Zero when `set_delta` is empty; the first term drops when `set_t` is.
pub fn linf_bound(
    mat_a: &SensingMatrix,
    set_t: &[usize],
    set_delta: &[usize],
    gamma: f64,
) -> Result<f64> {
    check_gamma(gamma)?;
    let partition =
        SupportPartition::from_known_parts(mat_a.m(), set_t.to_vec(), set_delta.to_vec())?;
    let f = Factors::new(mat_a, &partition)?;
    Ok(gamma * f.linf_gamma_coeff())
}

/// [`linf_bound`] plus the noise term ‖(A_Ne'A_Ne)^{-1}A_Ne'‖_∞·‖w‖_∞,
/// bounding the distance to the true signal rather than to the genie fit.
pub fn linf_bound_with_noise(
    mat_a: &SensingMatrix,
    partition: &SupportPartition,
    gamma: f64,
    winf_norm: f64,
) -> Result<f64> {
    check_gamma(gamma)?;
    check_norm(winf_norm, "winf_norm")?;
    let f = Factors::new(mat_a, partition)?;
    Ok(gamma * f.linf_gamma_coeff() + f.linf_noise_coeff() * winf_norm)
}

/// l2 error bound against the true signal:
/// ‖(A_Ne'A_Ne)^{-1}A_Ne'‖_2·‖w‖_2 + γ√|Δ|·√(‖(A_T'A_T)^{-1}A_T'A_Δ(A_Δ'MA_Δ)^{-1}‖_2²
/// + ‖(A_Δ'MA_Δ)^{-1}‖_2²).
pub fn l2_bound(
    mat_a: &SensingMatrix,
    partition: &SupportPartition,
    gamma: f64,
    w2_norm: f64,
) -> Result<f64> {
    check_gamma(gamma)?;
    check_norm(w2_norm, "w2_norm")?;
    let f = Factors::new(mat_a, partition)?;
    Ok(f.l2_noise_coeff() * w2_norm + gamma * f.l2_gamma_coeff())
}

/// l2 bound written purely in restricted isometry / orthogonality constants:
/// γ√|Δ|·√(θ²/(1−δ_T)² + 1) / (1 − δ_Δ − θ²/(1−δ_T)) + ‖w‖_2/√(1−δ_Ne).
///
/// `theta` couples the T and Δ column blocks. Errors with `NotApplicable`
/// when any denominator is nonpositive.
pub fn rip_l2_bound(
    delta_t: f64,
    delta_delta: f64,
    delta_ne: f64,
    theta: f64,
    size_delta: usize,
    gamma: f64,
    w2_norm: f64,
) -> Result<f64> {
    for (v, name) in [
        (delta_t, "delta_t"),
        (delta_delta, "delta_delta"),
        (delta_ne, "delta_ne"),
        (theta, "theta"),
    ] {
        check_norm(v, name)?;
    }
    check_gamma(gamma)?;
    check_norm(w2_norm, "w2_norm")?;
    if delta_t >= 1.0 {
        return Err(Error::NotApplicable(format!("delta_T = {delta_t} >= 1")));
    }
    if delta_ne >= 1.0 {
        return Err(Error::NotApplicable(format!("delta_Ne = {delta_ne} >= 1")));
    }
    let denom = 1.0 - delta_delta - theta * theta / (1.0 - delta_t);
    if denom <= 0.0 {
        return Err(Error::NotApplicable(format!(
            "1 − δ_Δ − θ²/(1−δ_T) = {denom:.6e} is nonpositive"
        )));
    }
    let amp = ((theta / (1.0 - delta_t)).powi(2) + 1.0).sqrt();
    Ok(gamma * (size_delta as f64).sqrt() * amp / denom + w2_norm / (1.0 - delta_ne).sqrt())
}

/// The plain-BPDN analogue of [`rip_l2_bound`] (empty trusted set):
/// γ√|N|/(1−δ_N) + ‖w‖_2/√(1−δ_N).
pub fn bpdn_l2_bound(delta_n: f64, size_n: usize, gamma: f64, w2_norm: f64) -> Result<f64> {
    check_norm(delta_n, "delta_n")?;
    check_gamma(gamma)?;
    check_norm(w2_norm, "w2_norm")?;
    if delta_n >= 1.0 {
        return Err(Error::NotApplicable(format!("delta_N = {delta_n} >= 1")));
    }
    Ok(gamma * (size_n as f64).sqrt() / (1.0 - delta_n) + w2_norm / (1.0 - delta_n).sqrt())
}

/// 1 − max_{ω ∉ N_e} ‖(A_Δ' M A_Δ)^{-1} A_Δ' M A_ω‖_1. Positive means the
/// sufficient condition can be met by some γ; 1 exactly when `set_delta` is
/// empty (the max is vacuous).
pub fn condition_factor(mat_a: &SensingMatrix, partition: &SupportPartition) -> Result<f64> {
    let f = Factors::new(mat_a, partition)?;
    Ok(f.condition_factor())
}

/// Smallest penalty weight satisfying the sufficient condition:
/// ‖A'(y − A_Ne c_Ne)‖_∞ / condition_factor. `NotApplicable` when the
/// condition factor is nonpositive (no γ works).
pub fn gamma_star(
    mat_a: &SensingMatrix,
    y: ArrayView1<f64>,
    partition: &SupportPartition,
) -> Result<f64> {
    check_measurement(mat_a, y)?;
    let f = Factors::new(mat_a, partition)?;
    f.gamma_star(y)
}

/// True exactly when γ strictly exceeds γ*, i.e. when
/// ‖A'(y − A_Ne c_Ne)‖_∞ < γ·condition_factor holds strictly. Computed via
/// the γ* ratio so the threshold is bit-exact against [`gamma_star`].
pub fn check_global_condition(
    mat_a: &SensingMatrix,
    y: ArrayView1<f64>,
    partition: &SupportPartition,
    gamma: f64,
) -> Result<bool> {
    check_gamma(gamma)?;
    check_measurement(mat_a, y)?;
    let f = Factors::new(mat_a, partition)?;
    Ok(gamma > f.gamma_star(y)?)
}

fn check_measurement(mat_a: &SensingMatrix, y: ArrayView1<f64>) -> Result<()> {
    if y.len() != mat_a.n() {
        return Err(Error::Argument(format!(
            "y has length {} but the matrix has {} rows",
            y.len(),
            mat_a.n()
        )));
    }
    Ok(())
}

/// Full evaluation with shared factorizations. Bounds are evaluated at
/// `gamma` when given, otherwise at γ* (which then must exist). Pass the
/// noise norms actually available; zero is the noiseless reading.
pub fn bound_report(
    mat_a: &SensingMatrix,
    y: ArrayView1<f64>,
    partition: &SupportPartition,
    gamma: Option<f64>,
    winf_norm: f64,
    w2_norm: f64,
) -> Result<BoundReport> {
    if let Some(g) = gamma {
        check_gamma(g)?;
    }
    check_norm(winf_norm, "winf_norm")?;
    check_norm(w2_norm, "w2_norm")?;
    check_measurement(mat_a, y)?;
    let f = Factors::new(mat_a, partition)?;
    let condition_factor = f.condition_factor();
    let lhs_condition = f.lhs_condition(y);
    let applicable = condition_factor > 0.0;
    let gamma_star = applicable.then(|| lhs_condition / condition_factor);
    let gamma_eval = match (gamma, gamma_star) {
        (Some(g), _) => g,
        (None, Some(gs)) => gs,
        (None, None) => {
            return Err(Error::NotApplicable(
                "no gamma given and gamma* undefined (condition factor nonpositive)".into(),
            ))
        }
    };
    Ok(BoundReport {
        linf_bound: gamma_eval * f.linf_gamma_coeff() + f.linf_noise_coeff() * winf_norm,
        l2_bound: f.l2_noise_coeff() * w2_norm + gamma_eval * f.l2_gamma_coeff(),
        condition_factor,
        lhs_condition,
        gamma_star,
        applicable,
    })
}

/// Exact S-restricted isometry constant by exhaustive enumeration:
/// max over all size-S column subsets of max(λ_max − 1, 1 − λ_min) of the
/// subset's Gram matrix. Guarded to C(m,S) ≤ 10⁶ subsets.
pub fn exact_ric(mat_a: &SensingMatrix, s: usize) -> Result<f64> {
    let m = mat_a.m();
    if s > m {
        return Err(Error::Argument(format!("subset size {s} exceeds m = {m}")));
    }
    if s == 0 {
        return Ok(0.0);
    }
    let count = binomial_capped(m, s, ENUM_GUARD)
        .ok_or_else(|| Error::Infeasible(format!("C({m},{s}) exceeds {ENUM_GUARD} subsets")))?;
    debug_assert!(count > 0);
    let mut worst = 0.0_f64;
    for subset in Combinations::new(m, s) {
        let block = mat_a.columns(&subset);
        let gram = block.t().dot(&block);
        let (lo, hi) = sym_eig_range(&gram);
        worst = worst.max(hi - 1.0).max(1.0 - lo);
    }
    Ok(worst)
}

/// Exact restricted orthogonality constant by exhaustive enumeration:
/// max over disjoint subsets |T1| = s1, |T2| = s2 of ‖A_T1' A_T2‖_2.
/// Guarded to C(m,s1)·C(m−s1,s2) ≤ 10⁶ pairs.
pub fn exact_roc(mat_a: &SensingMatrix, s1: usize, s2: usize) -> Result<f64> {
    let m = mat_a.m();
    if s1 + s2 > m {
        return Err(Error::Argument(format!("s1 + s2 = {} exceeds m = {m}", s1 + s2)));
    }
    if s1 == 0 || s2 == 0 {
        return Ok(0.0);
    }
    let pairs = binomial_capped(m, s1, ENUM_GUARD)
        .and_then(|c1| binomial_capped(m - s1, s2, ENUM_GUARD / c1.max(1)).map(|c2| c1 * c2))
        .ok_or_else(|| {
            Error::Infeasible(format!("C({m},{s1})·C({},{s2}) exceeds {ENUM_GUARD}", m - s1))
        })?;
    debug_assert!(pairs > 0);
    let mut worst = 0.0_f64;
    for t1 in Combinations::new(m, s1) {
        let rest: Vec<usize> = (0..m).filter(|i| t1.binary_search(i).is_err()).collect();
        let block1 = mat_a.columns(&t1);
        for pick in Combinations::new(rest.len(), s2) {
            let t2: Vec<usize> = pick.iter().map(|&i| rest[i]).collect();
            let block2 = mat_a.columns(&t2);
            let cross = block1.t().dot(&block2);
            worst = worst.max(spectral_norm_small(cross.view()));
        }
    }
    Ok(worst)
}

const ENUM_GUARD: u128 = 1_000_000;

fn binomial_capped(n: usize, k: usize, cap: u128) -> Option<u128> {
    debug_assert!(k <= n);
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > cap {
            return None;
        }
    }
    Some(acc)
}

/// Lexicographic k-subsets of 0..n.
struct Combinations {
    n: usize,
    k: usize,
    idx: Vec<usize>,
    fresh: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations { n, k, idx: (0..k).collect(), fresh: true }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.k > self.n {
            return None;
        }
        if self.fresh {
            self.fresh = false;
            return Some(self.idx.clone());
        }
        // advance the rightmost index that still has room
        let mut i = self.k;
        loop {
            if i == 0 {
                return None;
            }
            i -= 1;
            if self.idx[i] < self.n - self.k + i {
                self.idx[i] += 1;
                for j in i + 1..self.k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                return Some(self.idx.clone());
            }
        }
    }
}

/// Table of restricted isometry constants δ_S and restricted orthogonality
/// constants θ_{S,S'}. δ is kept non-decreasing in S and θ is stored on the
/// unordered size pair, so the symmetric lookups agree exactly.
#[derive(Debug, Clone, Default)]
pub struct RipConstants {
    delta: BTreeMap<usize, f64>,
    theta: BTreeMap<(usize, usize), f64>,
}

impl RipConstants {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_delta(&mut self, s: usize, value: f64) -> Result<()> {
        check_norm(value, "delta")?;
        let below_ok = self.delta.range(..=s).next_back().is_none_or(|(_, &v)| v <= value + 1e-12);
        let above_ok = self.delta.range(s..).next().is_none_or(|(_, &v)| value <= v + 1e-12);
        if !below_ok || !above_ok {
            return Err(Error::Argument(format!(
                "delta_{s} = {value} would break monotonicity in S"
            )));
        }
        self.delta.insert(s, value);
        Ok(())
    }

    pub fn set_theta(&mut self, s1: usize, s2: usize, value: f64) -> Result<()> {
        check_norm(value, "theta")?;
        self.theta.insert((s1.min(s2), s1.max(s2)), value);
        Ok(())
    }

    pub fn delta(&self, s: usize) -> Option<f64> {
        self.delta.get(&s).copied()
    }

    pub fn theta(&self, s1: usize, s2: usize) -> Option<f64> {
        self.theta.get(&(s1.min(s2), s1.max(s2))).copied()
    }

    /// Exhaustive constants for a small matrix, for the requested subset
    /// sizes and size pairs.
    pub fn exact(
        mat_a: &SensingMatrix,
        delta_sizes: &[usize],
        theta_pairs: &[(usize, usize)],
    ) -> Result<Self> {
        let mut table = RipConstants::new();
        let mut sizes = delta_sizes.to_vec();
        sizes.sort_unstable();
        for s in sizes {
            let v = exact_ric(mat_a, s)?;
            table.set_delta(s, v)?;
        }
        for &(s1, s2) in theta_pairs {
            let v = exact_roc(mat_a, s1, s2)?;
            table.set_theta(s1, s2, v)?;
        }
        Ok(table)
    }
}
