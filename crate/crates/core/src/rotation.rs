//! Restarted self-guiding loop with spectral rotation.
//!
//! Over the block factors of the current partition each cycle alternates
//!
//! * `M`: generalized power iteration on `tr(M^T L M) + lambda tr(M^T S)`,
//! * `Q`: orthogonal Procrustes against the scaled indicator,
//! * `Y`: row-wise argmax of `|M Q|`,
//!
//! where `L` is the normalized block-diagonal kernel and
//! `S = D^{1/2} Y (Y^T D Y)^{-1/2} Q^T`. The objective tracked is
//! `f = |L - M M^T|_F^2 + lambda |M Q - D^{1/2} Y (Y^T D Y)^{-1/2}|_F^2`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clock::Timer;
use crate::kernel::{self, BlockFactors, KernelParams};
use crate::linalg;
use crate::metrics::MetricsReport;
use crate::partition::Partition;
use crate::restart::{check_sizes, reclassify, score, subspace_distance, Init};
use crate::{Dataset, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Alg2Params {
    pub kernel: KernelParams,
    pub itermax: usize,
    pub tol: f64,
    pub lambda: f64,
    pub inner_iter: usize,
    pub inner_tol: f64,
}

impl Default for Alg2Params {
    fn default() -> Self {
        Self {
            kernel: KernelParams::default(),
            itermax: 30,
            tol: 1e-3,
            lambda: 1.0,
            inner_iter: 100,
            inner_tol: 1e-8,
        }
    }
}

impl Alg2Params {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda", "must be finite and nonnegative"));
        }
        if self.inner_iter == 0 {
            return Err(Error::invalid("inner_iter", "must be at least 1"));
        }
        Ok(())
    }
}

/// Per-cluster degree sums `s_k`; errors on an empty cluster.
fn cluster_volumes(deg: &DVector<f64>, partition: &Partition) -> Result<Vec<f64>> {
    let mut s = vec![0.0; partition.c()];
    for (i, &a) in partition.assign().iter().enumerate() {
        s[a] += deg[i];
    }
    if let Some(k) = partition.empty_clusters().first() {
        return Err(Error::EmptyCluster(*k));
    }
    Ok(s)
}

/// `D^{1/2} Y (Y^T D Y)^{-1/2}`: row `i` is `sqrt(deg_i / s_a(i)) e_a(i)`.
pub fn scaled_indicator(deg: &DVector<f64>, partition: &Partition) -> Result<DMatrix<f64>> {
    let s = cluster_volumes(deg, partition)?;
    let mut y = DMatrix::zeros(partition.n(), partition.c());
    for (i, &a) in partition.assign().iter().enumerate() {
        y[(i, a)] = (deg[i] / s[a]).sqrt();
    }
    Ok(y)
}

/// `S = D^{1/2} Y (Y^T D Y)^{-1/2} Q^T`; row `i` is `sqrt(deg_i / s_a(i))`
/// times column `a(i)` of `Q`.
pub fn target_matrix_s(
    deg: &DVector<f64>,
    partition: &Partition,
    q: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let s = cluster_volumes(deg, partition)?;
    let mut out = DMatrix::zeros(partition.n(), partition.c());
    for (i, &a) in partition.assign().iter().enumerate() {
        let w = (deg[i] / s[a]).sqrt();
        for j in 0..partition.c() {
            out[(i, j)] = w * q[(j, a)];
        }
    }
    Ok(out)
}

/// `L X` computed block by block through the half factors.
pub fn apply_laplacian(blocks: &[BlockFactors], x: &DMatrix<f64>) -> DMatrix<f64> {
    let job = |b: &BlockFactors| {
        let rows = x.select_rows(b.member_rows.iter());
        b.apply(&rows)
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<DMatrix<f64>> = {
        use rayon::prelude::*;
        blocks.par_iter().map(job).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<DMatrix<f64>> = blocks.iter().map(job).collect();
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for (b, part) in blocks.iter().zip(parts) {
        for (p, &i) in b.member_rows.iter().enumerate() {
            out.set_row(i, &part.row(p));
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GpiTrace {
    /// `tr(M^T L M) + lambda tr(M^T S)` at the start and after every step.
    pub objective: Vec<f64>,
    pub iterations: usize,
    /// Steps whose polar factor needed null-space completion.
    pub deficient_steps: usize,
}

fn gpi_objective(
    blocks: &[BlockFactors],
    s: &DMatrix<f64>,
    lambda: f64,
    m: &DMatrix<f64>,
) -> (f64, DMatrix<f64>) {
    let lm = apply_laplacian(blocks, m);
    (m.dot(&lm) + lambda * m.dot(s), lm)
}

/// Maximizes `tr(M^T L M) + lambda tr(M^T S)` over orthonormal `M` by
/// `M <- polar(2 L M + lambda S)`. Stops once a step gains less than
/// `inner_tol` or after `inner_iter` steps.
pub fn gpi_update_m(
    blocks: &[BlockFactors],
    s: &DMatrix<f64>,
    lambda: f64,
    m_init: &DMatrix<f64>,
    inner_iter: usize,
    inner_tol: f64,
) -> (DMatrix<f64>, GpiTrace) {
    let mut m = m_init.clone();
    let (mut obj, mut lm) = gpi_objective(blocks, s, lambda, &m);
    let mut trace = GpiTrace {
        objective: vec![obj],
        ..Default::default()
    };
    for _ in 0..inner_iter {
        let k = lm * 2.0 + s * lambda;
        let (next, deficient) = linalg::polar(&k);
        if deficient > 0 {
            log::debug!("gpi: polar factor completed {deficient} null direction(s)");
            trace.deficient_steps += 1;
        }
        let (next_obj, next_lm) = gpi_objective(blocks, s, lambda, &next);
        trace.iterations += 1;
        trace.objective.push(next_obj);
        debug_assert!(
            next_obj >= obj - 1e-9 * obj.abs().max(1.0),
            "gpi objective decreased: {obj} -> {next_obj}"
        );
        let gain = next_obj - obj;
        m = next;
        obj = next_obj;
        lm = next_lm;
        if gain < inner_tol {
            break;
        }
    }
    (m, trace)
}

/// `N = M^T D^{1/2} Y (Y^T D Y)^{-1/2}` and its orthogonal polar factor.
pub fn update_q(
    m: &DMatrix<f64>,
    deg: &DVector<f64>,
    partition: &Partition,
) -> Result<DMatrix<f64>> {
    let n_mat = m.transpose() * scaled_indicator(deg, partition)?;
    Ok(linalg::polar(&n_mat).0)
}

/// Row-wise argmax of `|M Q|`, ties to the lowest column, then empty-cluster
/// repair over `points` (row-major, `dim` columns). Returns the partition and
/// the number of clusters repaired.
pub fn update_y(
    m: &DMatrix<f64>,
    q: &DMatrix<f64>,
    points: &[f64],
    dim: usize,
) -> (Partition, usize) {
    let g = m * q;
    let assign = argmax_abs_rows(&g);
    let mut p = Partition::new(assign, g.ncols()).expect("argmax is in range");
    let repaired = p.repair_empty(points, dim);
    (p, repaired)
}

pub fn argmax_abs_rows(g: &DMatrix<f64>) -> Vec<usize> {
    (0..g.nrows())
        .map(|i| {
            let mut best = 0;
            for j in 1..g.ncols() {
                if g[(i, j)].abs() > g[(i, best)].abs() {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub f: f64,
    pub term1: f64,
    pub term2: f64,
}

/// Factored evaluation of `f`; the first term is
/// `sum_j |Lhalf_j^T Lhalf_j|_F^2 - 2 tr(M^T L M) + |M^T M|_F^2`.
pub fn objective_f(
    blocks: &[BlockFactors],
    m: &DMatrix<f64>,
    q: &DMatrix<f64>,
    partition: &Partition,
    lambda: f64,
    deg: &DVector<f64>,
) -> Result<Objective> {
    let l_sq: f64 = blocks.iter().map(|b| b.normalized_frob_sq()).sum();
    let lm = apply_laplacian(blocks, m);
    let term1 = l_sq - 2.0 * m.dot(&lm) + (m.transpose() * m).norm_squared();
    let term2 = (m * q - scaled_indicator(deg, partition)?).norm_squared();
    Ok(Objective {
        f: term1 + lambda * term2,
        term1,
        term2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationRecord {
    pub cycle: usize,
    pub f: f64,
    pub term1: f64,
    pub term2: f64,
    /// `f` at fixed block factors before and after each update.
    pub f_start: f64,
    pub f_after_m: f64,
    pub f_after_q: f64,
    pub f_after_y: f64,
    pub gpi: GpiTrace,
    pub subspace_distance: Option<f64>,
    pub empty_clusters_repaired: usize,
    pub q_orthonormality_error: f64,
    pub m_orthonormality_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RotationState {
    pub m: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub partition: Partition,
    pub lambda: f64,
    pub cycle: usize,
    pub history: Vec<RotationRecord>,
    pub tau: f64,
    pub converged: bool,
}

pub fn run_algorithm2(
    ds: &Dataset,
    c: usize,
    init: &Init,
    params: &Alg2Params,
) -> Result<RotationState> {
    run_algorithm2_with(ds, c, init, params, |_, _| {})
}

/// As [`run_algorithm2`], calling `observe` after every cycle.
pub fn run_algorithm2_with(
    ds: &Dataset,
    c: usize,
    init: &Init,
    params: &Alg2Params,
    mut observe: impl FnMut(&RotationRecord, &Partition),
) -> Result<RotationState> {
    check_sizes(ds, c)?;
    params.validate()?;
    let partition = init.resolve(ds, c)?;
    let tau = params.kernel.resolve_tau(ds);
    log::info!(
        "alg2: n = {}, c = {c}, tau = {tau:.6}, lambda = {}",
        ds.n(),
        params.lambda
    );
    let mut state = RotationState {
        m: linalg::identity_columns(ds.n(), c),
        q: DMatrix::identity(c, c),
        partition,
        lambda: params.lambda,
        cycle: 0,
        history: Vec::new(),
        tau,
        converged: false,
    };
    for t in 0..params.itermax {
        let rec = rotation_cycle(ds, &mut state, t, params).map_err(|e| e.at_cycle(t))?;
        observe(&rec, &state.partition);
        let stop = rec.subspace_distance.is_some_and(|d| d < params.tol);
        state.history.push(rec);
        state.cycle = t + 1;
        if stop {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

fn rotation_cycle(
    ds: &Dataset,
    st: &mut RotationState,
    t: usize,
    params: &Alg2Params,
) -> Result<RotationRecord> {
    let timer = Timer::start();
    let lambda = params.lambda;
    let blocks = kernel::build_blocks(ds, &st.partition, st.tau, &params.kernel)?;
    let deg = kernel::global_degrees(&blocks, ds.n());
    let f_start = objective_f(&blocks, &st.m, &st.q, &st.partition, lambda, &deg)?.f;

    let s = target_matrix_s(&deg, &st.partition, &st.q)?;
    let (m, gpi) = gpi_update_m(
        &blocks,
        &s,
        lambda,
        &st.m,
        params.inner_iter,
        params.inner_tol,
    );
    let f_after_m = objective_f(&blocks, &m, &st.q, &st.partition, lambda, &deg)?.f;

    let q = update_q(&m, &deg, &st.partition)?;
    let f_after_q = objective_f(&blocks, &m, &q, &st.partition, lambda, &deg)?.f;

    let (y, repaired) = update_y(&m, &q, ds.samples(), ds.d());
    let end = objective_f(&blocks, &m, &q, &y, lambda, &deg)?;

    let distance = (t > 0).then(|| subspace_distance(&st.m, &m));
    let next = reclassify(&st.partition, &y, ds);
    let rec = RotationRecord {
        cycle: t,
        f: end.f,
        term1: end.term1,
        term2: end.term2,
        f_start,
        f_after_m,
        f_after_q,
        f_after_y: end.f,
        gpi,
        subspace_distance: distance,
        empty_clusters_repaired: repaired,
        q_orthonormality_error: linalg::orthonormality_error(&q),
        m_orthonormality_error: linalg::orthonormality_error(&m),
        metrics: score(ds, &next),
        seconds: timer.seconds(),
    };
    log::debug!("alg2 cycle {t}: f = {:.6e}, distance {distance:?}", rec.f);
    st.m = m;
    st.q = q;
    st.partition = next;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_blobs, normalize_rows};

    #[test]
    fn target_with_uniform_degrees() {
        let p = Partition::new(vec![0, 0, 1, 1, 2, 2], 3).unwrap();
        let deg = DVector::from_element(6, 1.0);
        let s = target_matrix_s(&deg, &p, &DMatrix::identity(3, 3)).unwrap();
        let h = 0.5f64.sqrt();
        for i in 0..6 {
            for j in 0..3 {
                let want = if j == p.of(i) { h } else { 0.0 };
                assert!((s[(i, j)] - want).abs() < 1e-15);
            }
        }
        assert!((s.norm_squared() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn target_matches_indicator_times_q_transpose() {
        let p = Partition::new(vec![0, 1, 1, 0, 1], 2).unwrap();
        let deg = DVector::from_vec(vec![1.0, 2.0, 0.5, 3.0, 1.5]);
        let q = DMatrix::from_row_slice(2, 2, &[0.6, -0.8, 0.8, 0.6]);
        let want = scaled_indicator(&deg, &p).unwrap() * q.transpose();
        let got = target_matrix_s(&deg, &p, &q).unwrap();
        assert!((got - want).amax() < 1e-15);
    }

    #[test]
    fn target_rejects_empty_cluster() {
        let p = Partition::new(vec![0, 0], 2).unwrap();
        let deg = DVector::from_element(2, 1.0);
        assert!(matches!(
            target_matrix_s(&deg, &p, &DMatrix::identity(2, 2)),
            Err(Error::EmptyCluster(1))
        ));
    }

    #[test]
    fn argmax_examples() {
        let g = DMatrix::from_row_slice(2, 3, &[0.1, -0.9, 0.2, 0.5, -0.5, 0.0]);
        assert_eq!(argmax_abs_rows(&g), vec![1, 0]);
    }

    #[test]
    fn q_examples() {
        let m = DMatrix::identity(2, 2);
        let p = Partition::new(vec![0, 1], 2).unwrap();
        let deg = DVector::from_element(2, 1.0);
        assert_eq!(update_q(&m, &deg, &p).unwrap(), DMatrix::identity(2, 2));
        let n_mat = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -3.0]));
        let q = linalg::polar(&n_mat).0;
        assert!((q - DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]))).amax() < 1e-12);
    }

    #[test]
    fn zero_cycles_return_init() {
        let ds = normalize_rows(&make_blobs(3, 20, 2, 10.0, 2).unwrap()).unwrap();
        let params = Alg2Params {
            itermax: 0,
            ..Default::default()
        };
        let init = Partition::random(ds.n(), 3, 1, ds.samples(), ds.d()).unwrap();
        let out = run_algorithm2(&ds, 3, &Init::Given(init.clone()), &params).unwrap();
        assert_eq!(out.partition, init);
        assert!(out.history.is_empty());
    }

    #[test]
    fn run_keeps_invariants() {
        let ds = normalize_rows(&make_blobs(3, 30, 2, 10.0, 6).unwrap()).unwrap();
        let out = run_algorithm2(&ds, 3, &Init::Random(2), &Alg2Params::default()).unwrap();
        assert!(out.partition.is_complete());
        for r in &out.history {
            assert!(r.m_orthonormality_error <= 1e-8);
            assert!(r.q_orthonormality_error <= 1e-10);
            assert!(r.f_after_m <= r.f_start + 1e-9);
            assert!(r.f_after_q <= r.f_after_m + 1e-9);
            for w in r.gpi.objective.windows(2) {
                assert!(w[1] >= w[0] - 1e-9);
            }
        }
    }
}
