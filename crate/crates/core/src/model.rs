//! Problem generation: sensing matrices, support partitions, sparse signals,
//! noisy measurements. Everything is a pure function of its RNG, so a seed
//! pins the whole experiment.
//!
//! Index sets are stored 0-based and sorted; anything user-facing (CLI input
//! files) speaks 1-based and is converted at the boundary.

use ndarray::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Partition of the coordinates `0..m` around a support prior.
///
/// * `set_n` — true signal support,
/// * `set_t` — the trusted set handed to the solver,
/// * `set_delta` — the part of the support missing from `set_t`,
/// * `set_delta_e` — the spurious part of `set_t` (disjoint from `set_n`),
/// * `set_ne` — `set_t ∪ set_delta = set_n ∪ set_delta_e`, the smallest
///   column set containing both the truth and the prior.
///
/// Invariants are checked on every construction: `set_delta ⊆ set_n`,
/// `set_delta_e ∩ set_n = ∅`, `set_t = (set_n ∪ set_delta_e) \ set_delta`,
/// `set_t ∩ set_delta = ∅`, and `|set_ne| = |set_n| + |set_delta_e|`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportPartition {
    m: usize,
    set_n: Vec<usize>,
    set_t: Vec<usize>,
    set_delta: Vec<usize>,
    set_delta_e: Vec<usize>,
    set_ne: Vec<usize>,
}

impl SupportPartition {
    /// Builds the partition from the true support and its two defect sets;
    /// `set_t` and `set_ne` are derived.
    pub fn new(
        m: usize,
        set_n: Vec<usize>,
        set_delta: Vec<usize>,
        set_delta_e: Vec<usize>,
    ) -> Result<Self> {
        let set_n = sorted_unique(set_n, m, "set_n")?;
        let set_delta = sorted_unique(set_delta, m, "set_delta")?;
        let set_delta_e = sorted_unique(set_delta_e, m, "set_delta_e")?;
        if !is_subset(&set_delta, &set_n) {
            return Err(Error::Argument("set_delta must be a subset of set_n".into()));
        }
        if intersects(&set_delta_e, &set_n) {
            return Err(Error::Argument("set_delta_e must be disjoint from set_n".into()));
        }
        let set_ne = union(&set_n, &set_delta_e);
        let set_t = difference(&set_ne, &set_delta);
        let p = SupportPartition { m, set_n, set_t, set_delta, set_delta_e, set_ne };
        p.check_invariants()?;
        Ok(p)
    }

    /// Builds a partition from the solver-side view only: a trusted set and
    /// the support coordinates known to be missing from it. The true support
    /// is taken to be `set_t ∪ set_delta` (no spurious part), which is all
    /// the bound computations ever look at.
    pub fn from_known_parts(m: usize, set_t: Vec<usize>, set_delta: Vec<usize>) -> Result<Self> {
        let set_t = sorted_unique(set_t, m, "set_t")?;
        let set_delta = sorted_unique(set_delta, m, "set_delta")?;
        if intersects(&set_t, &set_delta) {
            return Err(Error::Argument("set_t and set_delta must be disjoint".into()));
        }
        let set_n = union(&set_t, &set_delta);
        Self::new(m, set_n, set_delta, Vec::new())
    }

    fn check_invariants(&self) -> Result<()> {
        let ok = is_subset(&self.set_delta, &self.set_n)
            && !intersects(&self.set_delta_e, &self.set_n)
            && !intersects(&self.set_t, &self.set_delta)
            && self.set_t == difference(&union(&self.set_n, &self.set_delta_e), &self.set_delta)
            && self.set_ne == union(&self.set_t, &self.set_delta)
            && self.set_ne == union(&self.set_n, &self.set_delta_e)
            && self.set_ne.len() == self.set_n.len() + self.set_delta_e.len()
            && self.set_ne.iter().all(|&i| i < self.m);
        if ok {
            Ok(())
        } else {
            Err(Error::Argument("support partition set algebra violated".into()))
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn set_n(&self) -> &[usize] {
        &self.set_n
    }
    pub fn set_t(&self) -> &[usize] {
        &self.set_t
    }
    pub fn set_delta(&self) -> &[usize] {
        &self.set_delta
    }
    pub fn set_delta_e(&self) -> &[usize] {
        &self.set_delta_e
    }
    pub fn set_ne(&self) -> &[usize] {
        &self.set_ne
    }
}

/// Sorted, duplicate-free, in-range copy of a caller-supplied index set.
pub(crate) fn validate_index_set(set: &[usize], m: usize, name: &str) -> Result<Vec<usize>> {
    sorted_unique(set.to_vec(), m, name)
}

fn sorted_unique(mut v: Vec<usize>, m: usize, name: &str) -> Result<Vec<usize>> {
    v.sort_unstable();
    if v.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Argument(format!("{name} contains duplicate indices")));
    }
    if v.last().is_some_and(|&i| i >= m) {
        return Err(Error::Argument(format!("{name} contains an index >= m")));
    }
    Ok(v)
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|x| b.binary_search(x).is_ok())
}

fn intersects(a: &[usize], b: &[usize]) -> bool {
    a.iter().any(|x| b.binary_search(x).is_ok())
}

fn union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = a.iter().chain(b).copied().collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().copied().filter(|x| b.binary_search(x).is_err()).collect()
}

/// Dense real sensing matrix with unit-norm columns (within 1e-12).
///
/// The experiments always use n < m, but nothing in the library requires it.
#[derive(Debug, Clone)]
pub struct SensingMatrix {
    a: Array2<f64>,
    // ||A||_2^2 is reused by every solve against this matrix
    op_sq_norm: std::sync::OnceLock<f64>,
}

impl PartialEq for SensingMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.a == other.a
    }
}

impl SensingMatrix {
    pub const UNIT_COLUMN_TOL: f64 = 1e-12;

    /// Wraps an existing matrix, rejecting any column whose norm strays from
    /// 1 by more than [`Self::UNIT_COLUMN_TOL`].
    pub fn new(a: Array2<f64>) -> Result<Self> {
        for (j, col) in a.columns().into_iter().enumerate() {
            let norm = col.dot(&col).sqrt();
            if (norm - 1.0).abs() > Self::UNIT_COLUMN_TOL {
                return Err(Error::Argument(format!(
                    "column {} has norm {norm:.6e}, not unit; normalize first",
                    j + 1
                )));
            }
        }
        Ok(SensingMatrix { a, op_sq_norm: std::sync::OnceLock::new() })
    }

    /// Rescales every column to unit norm, then wraps. Fails on a zero column.
    pub fn normalizing(mut a: Array2<f64>) -> Result<Self> {
        for (j, mut col) in a.columns_mut().into_iter().enumerate() {
            let norm = col.dot(&col).sqrt();
            if norm == 0.0 {
                return Err(Error::Argument(format!("column {} is zero, cannot normalize", j + 1)));
            }
            col.mapv_inplace(|v| v / norm);
        }
        Ok(SensingMatrix { a, op_sq_norm: std::sync::OnceLock::new() })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.a.ncols()
    }
    pub fn as_array(&self) -> ArrayView2<'_, f64> {
        self.a.view()
    }

    /// Squared spectral norm ‖A‖₂², computed once by power iteration and
    /// cached. This is the gradient Lipschitz constant of ½‖y − Ab‖₂².
    pub fn op_sq_norm(&self) -> f64 {
        *self.op_sq_norm.get_or_init(|| crate::linalg::spectral_sq_norm(self.a.view()))
    }

    /// Gathers the given columns into a dense n × |idx| block.
    pub fn columns(&self, idx: &[usize]) -> Array2<f64> {
        let mut block = Array2::zeros((self.n(), idx.len()));
        for (k, &j) in idx.iter().enumerate() {
            block.column_mut(k).assign(&self.a.column(j));
        }
        block
    }
}

/// i.i.d. standard normal entries, each column scaled to unit norm.
/// Columns are drawn one after another, so the result is a deterministic
/// function of the RNG state.
pub fn generate_sensing_matrix(n: usize, m: usize, rng: &mut impl Rng) -> SensingMatrix {
    assert!(n >= 1 && m >= 1, "matrix dimensions must be positive");
    let mut a = Array2::zeros((n, m));
    for j in 0..m {
        let mut norm2 = 0.0;
        while norm2 == 0.0 {
            // a zero draw has probability zero; the loop only guards it
            for i in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                a[[i, j]] = z;
                norm2 += z * z;
            }
        }
        let inv = 1.0 / norm2.sqrt();
        a.column_mut(j).mapv_inplace(|v| v * inv);
    }
    SensingMatrix { a, op_sq_norm: std::sync::OnceLock::new() }
}

/// Uniform random `k`-subset of `candidates`, returned sorted.
/// Partial Fisher–Yates: exactly `k` RNG draws, O(|candidates|) work.
pub fn sample_subset(candidates: &[usize], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    assert!(k <= candidates.len(), "cannot sample {k} of {}", candidates.len());
    let mut pool = candidates.to_vec();
    let len = pool.len();
    for i in 0..k {
        let j = rng.random_range(i..len);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    pool
}

/// Draws a support partition: `set_n` uniform over size-`size_n` subsets of
/// `0..m`, `set_delta` uniform over subsets of `set_n`, `set_delta_e` uniform
/// over subsets of the complement of `set_n` — in that order.
pub fn generate_partition(
    m: usize,
    size_n: usize,
    size_delta: usize,
    size_delta_e: usize,
    rng: &mut impl Rng,
) -> Result<SupportPartition> {
    if size_delta > size_n {
        return Err(Error::Argument(format!("size_delta ({size_delta}) > size_n ({size_n})")));
    }
    if size_n + size_delta_e > m {
        return Err(Error::Argument(format!(
            "size_n + size_delta_e ({}) exceeds m ({m})",
            size_n + size_delta_e
        )));
    }
    let all: Vec<usize> = (0..m).collect();
    let set_n = sample_subset(&all, size_n, rng);
    let set_delta = sample_subset(&set_n, size_delta, rng);
    let complement = difference(&all, &set_n);
    let set_delta_e = sample_subset(&complement, size_delta_e, rng);
    SupportPartition::new(m, set_n, set_delta, set_delta_e)
}

/// Zero-mean Gaussian entries with the given variance on `set_n` (drawn in
/// ascending index order), zero elsewhere.
pub fn generate_signal(
    partition: &SupportPartition,
    variance: f64,
    rng: &mut impl Rng,
) -> Array1<f64> {
    assert!(variance > 0.0, "signal variance must be positive");
    let sd = variance.sqrt();
    let mut x = Array1::zeros(partition.m());
    for &i in partition.set_n() {
        let z: f64 = rng.sample(StandardNormal);
        x[i] = sd * z;
    }
    x
}

/// `y = A x + w` with `w` i.i.d. zero-mean Gaussian of variance `sigma_w2`.
pub fn measure(
    mat_a: &SensingMatrix,
    x: &Array1<f64>,
    sigma_w2: f64,
    rng: &mut impl Rng,
) -> (Array1<f64>, Array1<f64>) {
    assert_eq!(x.len(), mat_a.m(), "signal length must match matrix columns");
    assert!(sigma_w2 >= 0.0, "noise variance must be nonnegative");
    let sd = sigma_w2.sqrt();
    let w = Array1::from_iter((0..mat_a.n()).map(|_| sd * rng.sample::<f64, _>(StandardNormal)));
    let y = mat_a.as_array().dot(x) + &w;
    (y, w)
}

/// One fully materialized recovery problem: matrix, truth, noise,
/// measurements, and the support bookkeeping. `y = A x + w` holds by
/// construction and `x` is zero outside `partition.set_n()`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub mat_a: SensingMatrix,
    pub x: Array1<f64>,
    pub w: Array1<f64>,
    pub y: Array1<f64>,
    pub partition: SupportPartition,
    pub sigma_w2: f64,
    pub signal_var: f64,
}

impl ProblemInstance {
    /// Draws partition, signal, and noise for an existing matrix, in that
    /// order, from the one RNG.
    #[allow(clippy::too_many_arguments)]
    pub fn draw(
        mat_a: &SensingMatrix,
        size_n: usize,
        size_delta: usize,
        size_delta_e: usize,
        signal_var: f64,
        sigma_w2: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let partition = generate_partition(mat_a.m(), size_n, size_delta, size_delta_e, rng)?;
        let x = generate_signal(&partition, signal_var, rng);
        let (y, w) = measure(mat_a, &x, sigma_w2, rng);
        Ok(ProblemInstance {
            mat_a: mat_a.clone(),
            x,
            w,
            y,
            partition,
            sigma_w2,
            signal_var,
        })
    }
}

/// Seed derivation. Every stream gets its own u64 so trials are individually
/// reproducible and the matrix for a sweep point never depends on how many
/// trials ran before it.
pub mod seeds {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// SplitMix64 finalizer; full-period bijective mixing of a u64.
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e3779b97f4a7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    const TAG_TRIAL: u64 = 0x7472_6961_6c00_0001;
    const TAG_MATRIX: u64 = 0x6d61_7472_6978_0002;

    /// Seed for trial `trial_index` of a run with the given base seed.
    pub fn trial_seed(base: u64, trial_index: usize) -> u64 {
        mix(mix(base ^ TAG_TRIAL) ^ trial_index as u64)
    }

    /// Seed for the sensing matrix of the (n, m) sweep point.
    pub fn matrix_seed(base: u64, n: usize, m: usize) -> u64 {
        mix(mix(base ^ TAG_MATRIX) ^ ((n as u64) << 32 | m as u64))
    }

    pub fn rng_from(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }
}
