//! Dense-oracle checks of the perturbation bounds for the low-rank
//! normalized Laplacian.
//!
//! Notation in this module: the *exact* normalized block Laplacian is
//! `L_exact = D^{-1/2} A D^{-1/2}` with `A` the dense block kernel and `D` its
//! row sums. The *approximate* one is `L_approx = Dhat^{-1/2} Ahat Dhat^{-1/2}`
//! with `Ahat = U Sigma U^T` from the Nyström factors.
//!
//! * `eps_a = max_j |A_j - Ahat_j|_2`, `eps_d = max_j |D_j - Dhat_j|_2`
//! * `rho_j = sqrt(n_j) |A_j - Ahat_j|_2`
//! * with `e = 1 + exp(-2 / tau^2)` and `i` the block holding the smallest
//!   `Dhat` entry, if `rho_i < e` then
//!   `|L_exact - L_approx|_2 <= eps_a / e + eps_d |Ahat|_2 / (sqrt(e) sqrt(e - rho_i))`
//! * if the exact eigengap `lambda_c - lambda_{c+1}` exceeds
//!   `|L_exact - L_approx|_2 = eta`, the top-`c` subspaces satisfy
//!   `|sin Theta|_2 <= 2 eta / (gap - eta)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::kernel::{self, BlockFactors, KernelParams, SizePolicy, TauPolicy};
use crate::linalg;
use crate::partition::Partition;
use crate::seed;
use crate::{Dataset, Error, Result};

/// Largest block the dense oracle will form.
pub const ORACLE_LIMIT: usize = 500;

/// Slack on every inequality check.
pub const SLACK: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct DenseBlock {
    pub a: DMatrix<f64>,
    pub deg: DVector<f64>,
    pub l: DMatrix<f64>,
}

/// Exact kernel, row-sum degrees, and normalized kernel of one block.
pub fn dense_block_oracle(
    ds: &Dataset,
    rows: &[usize],
    tau: f64,
    block: usize,
) -> Result<DenseBlock> {
    if rows.len() > ORACLE_LIMIT {
        return Err(Error::OracleSizeGuard {
            block,
            size: rows.len(),
            limit: ORACLE_LIMIT,
        });
    }
    let a = kernel::dense_kernel(ds, rows, tau);
    let deg = DVector::from_iterator(rows.len(), a.row_iter().map(|r| r.sum()));
    let inv = deg.map(|d| 1.0 / d.sqrt());
    let l = DMatrix::from_fn(rows.len(), rows.len(), |p, q| inv[p] * a[(p, q)] * inv[q]);
    Ok(DenseBlock { a, deg, l })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockErrors {
    pub eps_a: f64,
    pub eps_d: f64,
    /// `sqrt(n_j) |A_j - Ahat_j|_2` per block.
    pub rho: Vec<f64>,
    /// `|A_j - Ahat_j|_2` per block.
    pub kernel_error: Vec<f64>,
}

pub fn measure_errors(blocks: &[BlockFactors], oracles: &[DenseBlock]) -> BlockErrors {
    let mut out = BlockErrors {
        eps_a: 0.0,
        eps_d: 0.0,
        rho: Vec::new(),
        kernel_error: Vec::new(),
    };
    for (b, o) in blocks.iter().zip(oracles) {
        let approx = &b.u * DMatrix::from_diagonal(&b.sigma) * b.u.transpose();
        let err = linalg::spectral_norm_sym(&(&o.a - approx));
        let d_err = (&o.deg - &b.deg).amax();
        out.eps_a = out.eps_a.max(err);
        out.eps_d = out.eps_d.max(d_err);
        out.kernel_error.push(err);
        out.rho.push((b.n_j() as f64).sqrt() * err);
    }
    out
}

/// Scatters per-block square matrices into a dense `n x n` block-diagonal.
fn assemble<'a>(
    n: usize,
    parts: impl Iterator<Item = (&'a [usize], DMatrix<f64>)>,
) -> DMatrix<f64> {
    let mut full = DMatrix::zeros(n, n);
    for (rows, m) in parts {
        for (p, &i) in rows.iter().enumerate() {
            for (q, &k) in rows.iter().enumerate() {
                full[(i, k)] = m[(p, q)];
            }
        }
    }
    full
}

/// Top-`c` eigenvectors of the approximate Laplacian taken from the factors:
/// every block contributes the eigenpairs of its core `Delta_j`, lifted by
/// `Qhat_j`, and the `c` largest overall are kept (lowest block first on
/// ties). Returns the eigenvalues and the `n x c` basis.
pub fn factored_top_eigvecs(
    blocks: &[BlockFactors],
    n: usize,
    c: usize,
) -> (Vec<f64>, DMatrix<f64>) {
    let mut pairs: Vec<(f64, usize, DVector<f64>)> = Vec::new();
    for (j, b) in blocks.iter().enumerate() {
        let (vals, vecs) = linalg::sym_eigen_desc(&b.delta);
        for k in 0..vals.len() {
            pairs.push((vals[k], j, &b.qhat * vecs.column(k)));
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut m = DMatrix::zeros(n, c);
    let mut vals = Vec::with_capacity(c);
    for (col, (v, j, vec)) in pairs.into_iter().take(c).enumerate() {
        vals.push(v);
        for (p, &i) in blocks[j].member_rows.iter().enumerate() {
            m[(i, col)] = vec[p];
        }
    }
    (vals, m)
}

/// `|sin Theta|_2` between two orthonormal bases, by the smallest singular
/// value of `M^T M*` and by `|M* - M M^T M*|_2`.
pub fn sin_theta(m: &DMatrix<f64>, m_star: &DMatrix<f64>) -> (f64, f64) {
    let cross = m.transpose() * m_star;
    let (_, s, _) = linalg::svd_desc(&cross);
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0);
    let by_cos = (1.0 - smin * smin).max(0.0).sqrt();
    let by_residual = linalg::spectral_norm(&(m_star - m * cross));
    (by_cos, by_residual)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub instance: usize,
    pub n: usize,
    pub c: usize,
    pub tau: f64,
    pub eps_a: f64,
    pub eps_d: f64,
    pub rho: Vec<f64>,
    /// Block holding the smallest approximate degree.
    pub rho_block: usize,
    /// True when several blocks share that smallest degree.
    pub rho_block_tie: bool,
    pub norm_a_hat: f64,
    pub lhs_l: f64,
    /// `None` when the hypothesis is unmet.
    pub rhs_l: Option<f64>,
    pub bound_applicable: bool,
    pub bound_holds: bool,
    pub gap: f64,
    pub sin_theta: f64,
    pub sin_theta_residual: f64,
    /// `None` when the gap condition fails.
    pub sin_bound: Option<f64>,
    pub gap_condition_met: bool,
    pub sin_holds: bool,
}

impl PerturbationReport {
    /// False only when an applicable bound is violated.
    pub fn passes(&self) -> bool {
        (!self.bound_applicable || self.bound_holds) && (!self.gap_condition_met || self.sin_holds)
    }
}

/// Laplacian bound check from measured errors.
/// Returns `(rhs, holds)`, with `rhs = None` when `rho_i` breaks the hypothesis.
pub fn check_laplacian_bound(
    errs: &BlockErrors,
    rho_i: f64,
    norm_a_hat: f64,
    tau: f64,
    lhs: f64,
) -> (Option<f64>, bool) {
    let e = 1.0 + (-2.0 / (tau * tau)).exp();
    if rho_i >= e {
        return (None, false);
    }
    let rhs = errs.eps_a / e + errs.eps_d * norm_a_hat / (e.sqrt() * (e - rho_i).sqrt());
    (Some(rhs), lhs <= rhs + SLACK)
}

/// Subspace bound check. Returns `(bound, holds)`; the bound is `None` and
/// the check vacuous when the gap does not exceed `lhs`.
pub fn check_sintheta(sin_theta: f64, gap: f64, lhs: f64) -> (Option<f64>, bool) {
    if gap <= lhs {
        return (None, true);
    }
    let bound = 2.0 * lhs / (gap - lhs);
    (Some(bound), sin_theta <= bound + SLACK)
}

/// Runs both checks on one dataset and partition.
pub fn analyze(
    ds: &Dataset,
    partition: &Partition,
    tau: f64,
    params: &KernelParams,
    instance: usize,
) -> Result<PerturbationReport> {
    let n = ds.n();
    let c = partition.c();
    let blocks = kernel::build_blocks(ds, partition, tau, params)?;
    let oracles = blocks
        .iter()
        .map(|b| dense_block_oracle(ds, &b.member_rows, tau, b.block_index))
        .collect::<Result<Vec<_>>>()?;
    let errs = measure_errors(&blocks, &oracles);

    let l_exact = assemble(
        n,
        blocks
            .iter()
            .zip(&oracles)
            .map(|(b, o)| (b.member_rows.as_slice(), o.l.clone())),
    );
    let l_approx = assemble(
        n,
        blocks
            .iter()
            .map(|b| (b.member_rows.as_slice(), &b.lhalf * b.lhalf.transpose())),
    );
    let lhs = linalg::spectral_norm_sym(&(&l_exact - &l_approx));

    let mut rho_block = 0;
    let mut min_deg = f64::INFINITY;
    let mut tie = false;
    for b in &blocks {
        let d = b.deg.min();
        if d < min_deg {
            min_deg = d;
            rho_block = b.block_index;
            tie = false;
        } else if d == min_deg {
            tie = true;
        }
    }
    if tie {
        log::info!("instance {instance}: smallest degree shared by several blocks, using block {rho_block}");
    }
    let norm_a_hat = blocks.iter().map(|b| b.sigma.max()).fold(0.0, f64::max);
    let (rhs, holds) = check_laplacian_bound(&errs, errs.rho[rho_block], norm_a_hat, tau, lhs);

    let (vals, vecs) = linalg::sym_eigen_desc(&l_exact);
    let gap = if c < n {
        vals[c - 1] - vals[c]
    } else {
        vals[c - 1]
    };
    let m_star = vecs.columns(0, c).into_owned();
    let (_, m) = factored_top_eigvecs(&blocks, n, c);
    let (st, st_res) = sin_theta(&m, &m_star);
    let (sin_bound, sin_holds) = check_sintheta(st, gap, lhs);

    Ok(PerturbationReport {
        instance,
        n,
        c,
        tau,
        eps_a: errs.eps_a,
        eps_d: errs.eps_d,
        rho: errs.rho,
        rho_block,
        rho_block_tie: tie,
        norm_a_hat,
        lhs_l: lhs,
        rhs_l: rhs,
        bound_applicable: rhs.is_some(),
        bound_holds: holds,
        gap,
        sin_theta: st,
        sin_theta_residual: st_res,
        sin_bound,
        gap_condition_met: sin_bound.is_some(),
        sin_holds,
    })
}

/// Randomized instance generator for the bound checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub instances: usize,
    pub seed: u64,
    pub tau: f64,
    /// Landmark fraction per block.
    pub landmark_fraction: f64,
    /// Target rank per block.
    pub rank: usize,
    /// Standard deviation of the within-cluster noise before normalization.
    pub noise: f64,
    /// Attempts allowed before giving up on finding enough instances that
    /// meet the Laplacian bound's hypothesis.
    pub max_attempts: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            instances: 20,
            seed: 0,
            tau: 1.0,
            landmark_fraction: 0.3,
            rank: 8,
            noise: 0.3,
            max_attempts: 200,
        }
    }
}

impl SuiteConfig {
    pub fn kernel_params(&self, seed: u64) -> KernelParams {
        KernelParams {
            tau: TauPolicy::Fixed(self.tau),
            landmarks: SizePolicy::Fraction(self.landmark_fraction),
            rank: SizePolicy::Absolute(self.rank),
            seed,
            ..Default::default()
        }
    }
}

/// Unit-norm rows around `c` random directions, `c` in `{2, 3, 4}`,
/// cluster sizes in `30..=75` (so `n <= 300`), dimension in `3..=6`.
pub fn random_instance(seed_value: u64, noise: f64) -> (Dataset, Partition) {
    let mut rng = seed::rng(seed_value);
    let c = rng.random_range(2..=4usize);
    let d = rng.random_range(3..=6usize);
    let mut centers = Vec::with_capacity(c * d);
    for _ in 0..c {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        centers.extend(v.iter().map(|x| x / norm));
    }
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for k in 0..c {
        let size = rng.random_range(30..=75usize);
        for _ in 0..size {
            let mut x: Vec<f64> = (0..d)
                .map(|j| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    centers[k * d + j] + noise * z
                })
                .collect();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            x.iter_mut().for_each(|v| *v /= norm);
            samples.extend(x);
            labels.push(k);
        }
    }
    let n = labels.len();
    let ds = Dataset::new(
        format!("instance-{seed_value}"),
        n,
        d,
        samples,
        Some(labels.clone()),
    )
    .expect("finite samples");
    (ds, Partition::new(labels, c).expect("labels in range"))
}

/// Reports for `instances` generated instances whose Laplacian-bound
/// hypothesis holds, plus the number of generated instances skipped because
/// it did not.
pub fn run_suite(cfg: &SuiteConfig) -> Result<(Vec<PerturbationReport>, usize)> {
    let mut reports = Vec::new();
    let mut skipped = 0;
    for attempt in 0..cfg.max_attempts {
        if reports.len() == cfg.instances {
            break;
        }
        let s = seed::derive(cfg.seed, &[7, attempt as u64]);
        let (ds, p) = random_instance(s, cfg.noise);
        let rep = analyze(&ds, &p, cfg.tau, &cfg.kernel_params(s), reports.len())?;
        if rep.bound_applicable {
            reports.push(rep);
        } else {
            skipped += 1;
        }
    }
    Ok((reports, skipped))
}
