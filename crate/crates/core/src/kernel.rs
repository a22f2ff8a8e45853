//! Per-block Gaussian kernels with Nyström low-rank factors.
//!
//! For a block of `n_j` rows the pipeline is
//!
//! ```text
//! C = K(rows, landmarks)          n_j x m_j, entrywise
//! W = K(landmarks, landmarks)     m_j x m_j
//! C = Q R                         economized QR
//! R W^+ R^T = P Lambda P^T        symmetric eigendecomposition
//! U = Q P[:, :r], Sigma = Lambda[:r]
//! deg = |U Sigma U^T 1|           two mat-vecs, clamped
//! Uhat = deg^{-1/2} U = Qhat Rhat
//! Delta = Rhat Sigma Rhat^T,  Lhalf = Uhat Sigma^{1/2}
//! ```
//!
//! The block kernel `A_j` itself is never formed. The normalized block is
//! `Qhat Delta Qhat^T = Lhalf Lhalf^T`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::linalg::{self, sq_dist};
use crate::partition::Partition;
use crate::seed::{self, tag};
use crate::{Error, Result};

/// Gaussian bandwidth selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauPolicy {
    /// Median pairwise distance over at most 1000 sampled rows.
    Median,
    Fixed(f64),
}

/// Per-block count policy for landmarks (`m_j`) and target rank (`r_j`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizePolicy {
    Auto,
    Absolute(usize),
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelParams {
    pub tau: TauPolicy,
    pub landmarks: SizePolicy,
    pub rank: SizePolicy,
    pub pinv_tol: f64,
    pub deg_clamp: f64,
    pub seed: u64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            tau: TauPolicy::Median,
            landmarks: SizePolicy::Auto,
            rank: SizePolicy::Auto,
            pinv_tol: 1e-10,
            deg_clamp: 1e-12,
            seed: 0,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if let TauPolicy::Fixed(t) = self.tau {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::invalid("tau", format!("must be positive, got {t}")));
            }
        }
        for (name, p) in [("landmarks", self.landmarks), ("rank", self.rank)] {
            match p {
                SizePolicy::Absolute(0) => return Err(Error::invalid(name, "must be at least 1")),
                SizePolicy::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                    return Err(Error::invalid(name, format!("fraction {f} outside (0, 1]")))
                }
                _ => {}
            }
        }
        if let (SizePolicy::Absolute(m), SizePolicy::Absolute(r)) = (self.landmarks, self.rank) {
            if r > m {
                return Err(Error::invalid(
                    "rank",
                    format!("rank {r} exceeds landmarks {m}"),
                ));
            }
        }
        if !(self.pinv_tol > 0.0 && self.pinv_tol < 1.0) {
            return Err(Error::invalid("pinv_tol", "must lie in (0, 1)"));
        }
        if !(self.deg_clamp >= 0.0) {
            return Err(Error::invalid("deg_clamp", "must be nonnegative"));
        }
        Ok(())
    }

    /// Landmark count for a block of `n_j` rows among `c` clusters.
    pub fn landmarks_for(&self, n_j: usize, c: usize) -> usize {
        match self.landmarks {
            SizePolicy::Auto => n_j.min((c + 2).max((0.1 * n_j as f64).ceil() as usize)),
            SizePolicy::Absolute(m) => m,
            SizePolicy::Fraction(f) => ((f * n_j as f64).ceil() as usize).max(1),
        }
    }

    /// Target rank given `m_j` landmarks.
    pub fn rank_for(&self, m_j: usize) -> usize {
        let r = match self.rank {
            SizePolicy::Auto => m_j.div_ceil(2),
            SizePolicy::Absolute(r) => r,
            SizePolicy::Fraction(f) => (f * m_j as f64).ceil() as usize,
        };
        r.clamp(1, m_j.max(1))
    }

    pub fn resolve_tau(&self, ds: &Dataset) -> f64 {
        match self.tau {
            TauPolicy::Fixed(t) => t,
            TauPolicy::Median => median_tau(ds, self.seed),
        }
    }
}

/// `exp(-|x_p - x_q|^2 / (2 tau^2))`.
#[inline]
pub fn gaussian_entry(xp: &[f64], xq: &[f64], tau: f64) -> f64 {
    (-sq_dist(xp, xq) / (2.0 * tau * tau)).exp()
}

/// Median pairwise distance over at most 1000 uniformly sampled rows.
pub fn median_tau(ds: &Dataset, seed: u64) -> f64 {
    let n = ds.n();
    let k = n.min(1000);
    let mut rng = seed::rng(seed::derive(seed, &[tag::TAU]));
    let rows = rand::seq::index::sample(&mut rng, n, k).into_vec();
    let mut dists = Vec::with_capacity(k * (k.saturating_sub(1)) / 2);
    for a in 0..k {
        for b in a + 1..k {
            dists.push(sq_dist(ds.row(rows[a]), ds.row(rows[b])).sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    let mid = dists.len() / 2;
    let (_, med, _) = dists.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let med = *med;
    if med > 0.0 {
        med
    } else {
        let max = dists.iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            max
        } else {
            log::warn!("all sampled rows coincide; falling back to tau = 1");
            1.0
        }
    }
}

/// Draws `m_j` distinct members of `block_rows` uniformly without
/// replacement. Requests above the block size are clamped with a warning.
pub fn sample_landmarks(block_rows: &[usize], m_j: usize, seed: u64) -> Vec<usize> {
    let n_j = block_rows.len();
    let m = if m_j > n_j {
        log::warn!("requested {m_j} landmarks for a block of {n_j} rows; clamping");
        n_j
    } else {
        m_j
    };
    let mut rng = seed::rng(seed);
    rand::seq::index::sample(&mut rng, n_j, m)
        .into_iter()
        .map(|i| block_rows[i])
        .collect()
}

/// Dense kernel over the given global rows.
pub fn dense_kernel(ds: &Dataset, rows: &[usize], tau: f64) -> DMatrix<f64> {
    let n = rows.len();
    let mut a = DMatrix::zeros(n, n);
    for p in 0..n {
        a[(p, p)] = 1.0;
        for q in p + 1..n {
            let v = gaussian_entry(ds.row(rows[p]), ds.row(rows[q]), tau);
            a[(p, q)] = v;
            a[(q, p)] = v;
        }
    }
    a
}

/// Orthonormal factor `U` and nonnegative descending `Sigma` with
/// `U Sigma U^T` approximating a block kernel.
#[derive(Debug, Clone)]
pub struct LowRank {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    /// Eigenvalues of `R W^+ R^T` (or of the dense kernel) after clamping,
    /// before rank truncation.
    pub spectrum: DVector<f64>,
}

fn truncate(
    basis: &DMatrix<f64>,
    vecs: &DMatrix<f64>,
    mut vals: DVector<f64>,
    rank: usize,
    pinv_tol: f64,
    block: usize,
) -> Result<LowRank> {
    vals.iter_mut().for_each(|v| *v = v.max(0.0));
    let lmax = vals.iter().cloned().fold(0.0, f64::max);
    if !(lmax > 0.0) {
        return Err(Error::DegenerateKernel { block });
    }
    let kept = vals.iter().take_while(|&&v| v >= pinv_tol * lmax).count();
    let r = rank.min(kept).max(1);
    let u = basis * vecs.columns(0, r);
    Ok(LowRank {
        u,
        sigma: vals.rows(0, r).into_owned(),
        spectrum: vals,
    })
}

/// Nyström factorization of the block kernel over `members` using the given
/// `landmarks` (global row indices, a subset of `members`).
///
/// Blocks with `n_j <= rank` take the exact dense path.
pub fn nystrom_factorize(
    ds: &Dataset,
    members: &[usize],
    landmarks: &[usize],
    rank: usize,
    tau: f64,
    pinv_tol: f64,
    block: usize,
) -> Result<LowRank> {
    let n_j = members.len();
    if n_j == 0 {
        return Err(Error::EmptyCluster(block));
    }
    if n_j <= rank {
        let a = dense_kernel(ds, members, tau);
        let (vals, vecs) = linalg::sym_eigen_desc(&a);
        let eye = DMatrix::identity(n_j, n_j);
        return truncate(&eye, &vecs, vals, rank, pinv_tol, block);
    }
    let m = landmarks.len();
    let c = DMatrix::from_fn(n_j, m, |p, q| {
        gaussian_entry(ds.row(members[p]), ds.row(landmarks[q]), tau)
    });
    let w = dense_kernel(ds, landmarks, tau);
    if w.amax() == 0.0 {
        return Err(Error::DegenerateKernel { block });
    }
    let w_pinv = linalg::pinv_sym(&w, pinv_tol);
    let (q, r) = linalg::thin_qr(&c);
    let core = &r * w_pinv * r.transpose();
    let (vals, vecs) = linalg::sym_eigen_desc(&core);
    truncate(&q, &vecs, vals, rank, pinv_tol, block)
}

/// Approximate degrees `|U Sigma U^T 1|` with entries below `clamp` set to 1.
pub fn degrees_from_factors(u: &DMatrix<f64>, sigma: &DVector<f64>, clamp: f64) -> DVector<f64> {
    let ones = DVector::from_element(u.nrows(), 1.0);
    let t = (u.transpose() * ones).component_mul(sigma);
    let mut deg = u * t;
    for d in deg.iter_mut() {
        *d = d.abs();
        if *d < clamp {
            *d = 1.0;
        }
    }
    deg
}

/// Compressed factors of the normalized block `deg^{-1/2} U Sigma U^T deg^{-1/2}`.
#[derive(Debug, Clone)]
pub struct Compressed {
    pub qhat: DMatrix<f64>,
    pub rhat: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    pub lhalf: DMatrix<f64>,
}

pub fn compress_normalized(
    u: &DMatrix<f64>,
    sigma: &DVector<f64>,
    deg: &DVector<f64>,
    block: usize,
) -> Result<Compressed> {
    let mut uhat = u.clone();
    for (i, mut row) in uhat.row_iter_mut().enumerate() {
        row /= deg[i].sqrt();
    }
    let (qhat, rhat) = linalg::thin_qr(&uhat);
    for k in 0..rhat.nrows() {
        if rhat[(k, k)].abs() < 1e-12 {
            return Err(Error::RankDeficient {
                block,
                index: k,
                value: rhat[(k, k)],
            });
        }
    }
    let delta = &rhat * DMatrix::from_diagonal(sigma) * rhat.transpose();
    let delta = (&delta + delta.transpose()) * 0.5;
    let sqrt_sigma = sigma.map(f64::sqrt);
    let lhalf = uhat * DMatrix::from_diagonal(&sqrt_sigma);
    Ok(Compressed {
        qhat,
        rhat,
        delta,
        lhalf,
    })
}

#[derive(Debug, Clone)]
pub struct TopEigpair {
    pub lambda: f64,
    /// Unit vector over the block rows, signed so its entries sum to >= 0.
    pub vector: DVector<f64>,
    /// `|L_j m - lambda m|` evaluated through `Qhat Delta Qhat^T`.
    pub residual: f64,
}

/// Largest eigenpair of the normalized block via its `r_j x r_j` core.
pub fn block_top_eigpair(delta: &DMatrix<f64>, qhat: &DMatrix<f64>) -> TopEigpair {
    let (vals, vecs) = linalg::sym_eigen_desc(delta);
    let lambda = vals[0];
    let mut v = qhat * vecs.column(0);
    let norm = v.norm();
    if norm > 0.0 {
        v /= norm;
    }
    if v.sum() < 0.0 {
        v.neg_mut();
    }
    let lv = qhat * (delta * (qhat.transpose() * &v));
    let residual = (lv - &v * lambda).norm();
    TopEigpair {
        lambda,
        vector: v,
        residual,
    }
}

/// Everything computed for one block in one cycle.
#[derive(Debug, Clone)]
pub struct BlockFactors {
    pub block_index: usize,
    pub member_rows: Vec<usize>,
    pub landmarks: Vec<usize>,
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub deg: DVector<f64>,
    pub qhat: DMatrix<f64>,
    pub rhat: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    pub lhalf: DMatrix<f64>,
    pub top: TopEigpair,
}

impl BlockFactors {
    pub fn n_j(&self) -> usize {
        self.member_rows.len()
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `L_j x` through the half factor, without forming `L_j`.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.lhalf * (self.lhalf.transpose() * x)
    }

    /// `|L_j|_F^2 = |Lhalf^T Lhalf|_F^2`.
    pub fn normalized_frob_sq(&self) -> f64 {
        (self.lhalf.transpose() * &self.lhalf).norm_squared()
    }

    pub fn dump(&self) -> BlockDump {
        BlockDump {
            block_index: self.block_index,
            member_rows: self.member_rows.clone(),
            u: linalg::to_row_major(&self.u),
            rank: self.rank(),
            sigma: self.sigma.iter().cloned().collect(),
            deg: self.deg.iter().cloned().collect(),
        }
    }
}

/// Debug dump of a block's factors. `u` is row-major `n_j x rank`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDump {
    pub block_index: usize,
    pub member_rows: Vec<usize>,
    pub rank: usize,
    pub u: Vec<f64>,
    pub sigma: Vec<f64>,
    pub deg: Vec<f64>,
}

/// Runs the full per-block pipeline for one block.
pub fn build_block(
    ds: &Dataset,
    block_index: usize,
    members: &[usize],
    c: usize,
    tau: f64,
    params: &KernelParams,
) -> Result<BlockFactors> {
    let n_j = members.len();
    if n_j == 0 {
        return Err(Error::EmptyCluster(block_index));
    }
    let m_j = params.landmarks_for(n_j, c);
    let landmarks = sample_landmarks(
        members,
        m_j,
        seed::derive(params.seed, &[tag::LANDMARKS, block_index as u64]),
    );
    let rank = params.rank_for(landmarks.len());
    let lr = nystrom_factorize(
        ds,
        members,
        &landmarks,
        rank,
        tau,
        params.pinv_tol,
        block_index,
    )?;
    let deg = degrees_from_factors(&lr.u, &lr.sigma, params.deg_clamp);
    let comp = compress_normalized(&lr.u, &lr.sigma, &deg, block_index)?;
    let top = block_top_eigpair(&comp.delta, &comp.qhat);
    debug_assert!(
        top.residual <= 1e-8,
        "block {block_index} residual {}",
        top.residual
    );
    Ok(BlockFactors {
        block_index,
        member_rows: members.to_vec(),
        landmarks,
        u: lr.u,
        sigma: lr.sigma,
        deg,
        qhat: comp.qhat,
        rhat: comp.rhat,
        delta: comp.delta,
        lhalf: comp.lhalf,
        top,
    })
}

/// Builds every block of `partition`, in parallel when the `parallel`
/// feature is on. Results are ordered by block index.
pub fn build_blocks(
    ds: &Dataset,
    partition: &Partition,
    tau: f64,
    params: &KernelParams,
) -> Result<Vec<BlockFactors>> {
    let blocks = partition.blocks();
    let c = partition.c();
    let job = |(j, members): (usize, &Vec<usize>)| build_block(ds, j, members, c, tau, params);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        blocks.par_iter().enumerate().map(job).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        blocks.iter().enumerate().map(job).collect()
    }
}

/// Global approximate degree vector assembled from per-block degrees.
pub fn global_degrees(blocks: &[BlockFactors], n: usize) -> DVector<f64> {
    let mut deg = DVector::zeros(n);
    for b in blocks {
        for (p, &i) in b.member_rows.iter().enumerate() {
            deg[i] = b.deg[p];
        }
    }
    deg
}
