//! Restarted self-guiding loop with K-means post-processing.
//!
//! Each cycle rebuilds one kernel block per current cluster, takes every
//! block's top normalized eigenvector, stacks them into a block-column
//! embedding `M` and clusters its rows with K-means. The result becomes the
//! next cycle's partition. The loop stops when the embedding subspace stops
//! moving or after `itermax` cycles.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::clock::Timer;
use crate::kernel::{self, BlockFactors, KernelParams};
use crate::kmeans::{self, KmeansParams};
use crate::linalg;
use crate::metrics::{self, MetricsReport};
use crate::partition::Partition;
use crate::seed::{self, tag};
use crate::{Dataset, Error, Result};

/// Starting partition for either driver.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Uniform random assignment with the given seed, then empty-cluster repair.
    Random(u64),
    Given(Partition),
}

impl Init {
    pub fn resolve(&self, ds: &Dataset, c: usize) -> Result<Partition> {
        match self {
            Init::Random(s) => {
                log::info!("random initial partition, seed {s}");
                Partition::random(ds.n(), c, *s, ds.samples(), ds.d())
            }
            Init::Given(p) => {
                if p.n() != ds.n() {
                    return Err(Error::LengthMismatch {
                        expected: ds.n(),
                        got: p.n(),
                    });
                }
                if p.c() != c {
                    return Err(Error::invalid(
                        "init",
                        format!("partition has {} clusters, expected {c}", p.c()),
                    ));
                }
                let mut p = p.clone();
                let fixed = p.repair_empty(ds.samples(), ds.d());
                if fixed > 0 {
                    log::warn!("initial partition had {fixed} empty cluster(s), repaired");
                }
                Ok(p)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Alg1Params {
    pub kernel: KernelParams,
    pub itermax: usize,
    pub tol: f64,
    pub kmeans: KmeansParams,
    /// Seed for the K-means step of every cycle.
    pub seed: u64,
}

impl Default for Alg1Params {
    fn default() -> Self {
        Self {
            kernel: KernelParams::default(),
            itermax: 30,
            tol: 1e-3,
            kmeans: KmeansParams::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    /// `None` on the first cycle, where the test is skipped.
    pub subspace_distance: Option<f64>,
    /// Top normalized eigenvalue of each block.
    pub lambdas: Vec<f64>,
    pub block_sizes: Vec<usize>,
    pub orthonormality_error: f64,
    pub empty_clusters_repaired: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RestartState {
    /// Number of cycles run.
    pub cycle: usize,
    pub partition: Partition,
    /// Embedding from the last cycle (identity columns if none ran).
    pub m_prev: DMatrix<f64>,
    pub history: Vec<CycleRecord>,
    pub tau: f64,
    /// True when the subspace test fired before `itermax`.
    pub converged: bool,
}

/// Scatters every block's top eigenvector into column `block_index` of an
/// `n x c` matrix.
///
/// Panics if two blocks claim the same row.
pub fn assemble_embedding(blocks: &[BlockFactors], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, blocks.len());
    let mut owner = vec![usize::MAX; n];
    for b in blocks {
        for (p, &i) in b.member_rows.iter().enumerate() {
            assert!(
                owner[i] == usize::MAX,
                "row {i} claimed by blocks {} and {}",
                owner[i],
                b.block_index
            );
            owner[i] = b.block_index;
            m[(i, b.block_index)] = b.top.vector[p];
        }
    }
    m
}

/// `|M_prev - M (M^T M_prev)|_F`, the part of the old subspace the new one
/// misses.
pub fn subspace_distance(m_prev: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    (m_prev - m * (m.transpose() * m_prev)).norm()
}

/// New self-guide partition: `y_new` with empty clusters refilled by the
/// farthest-point policy over the samples. Only index lists change; the
/// dataset is never copied or reordered.
pub fn reclassify(old: &Partition, y_new: &Partition, ds: &Dataset) -> Partition {
    assert_eq!(
        old.n(),
        y_new.n(),
        "partitions over different sample counts"
    );
    let mut p = y_new.clone();
    p.repair_empty(ds.samples(), ds.d());
    p
}

pub(crate) fn score(ds: &Dataset, p: &Partition) -> Option<MetricsReport> {
    ds.labels()
        .map(|t| metrics::evaluate(p.assign(), t).expect("labels cover every sample"))
}

pub(crate) fn check_sizes(ds: &Dataset, c: usize) -> Result<()> {
    if c < 2 {
        return Err(Error::invalid("c", "need at least 2 clusters"));
    }
    if ds.n() < c {
        return Err(Error::invalid(
            "c",
            format!("{c} clusters for {} samples", ds.n()),
        ));
    }
    Ok(())
}

pub fn run_algorithm1(
    ds: &Dataset,
    c: usize,
    init: &Init,
    params: &Alg1Params,
) -> Result<RestartState> {
    run_algorithm1_with(ds, c, init, params, |_, _| {})
}

/// As [`run_algorithm1`], calling `observe` with each cycle's record and the
/// partition it produced.
pub fn run_algorithm1_with(
    ds: &Dataset,
    c: usize,
    init: &Init,
    params: &Alg1Params,
    mut observe: impl FnMut(&CycleRecord, &Partition),
) -> Result<RestartState> {
    check_sizes(ds, c)?;
    params.kernel.validate()?;
    let mut partition = init.resolve(ds, c)?;
    let tau = params.kernel.resolve_tau(ds);
    log::info!("alg1: n = {}, c = {c}, tau = {tau:.6}", ds.n());
    let mut state = RestartState {
        cycle: 0,
        partition: partition.clone(),
        m_prev: linalg::identity_columns(ds.n(), c),
        history: Vec::new(),
        tau,
        converged: false,
    };
    for t in 0..params.itermax {
        let timer = Timer::start();
        let blocks =
            kernel::build_blocks(ds, &partition, tau, &params.kernel).map_err(|e| e.at_cycle(t))?;
        let m = assemble_embedding(&blocks, ds.n());
        let orth = linalg::orthonormality_error(&m);
        let points = linalg::to_row_major(&m);
        let km = kmeans::kmeans(
            &points,
            c,
            c,
            &params.kmeans,
            seed::derive(params.seed, &[tag::KMEANS, t as u64]),
        )
        .map_err(|e| e.at_cycle(t))?;
        let distance = (t > 0).then(|| subspace_distance(&state.m_prev, &m));
        let next = reclassify(&partition, &km.partition, ds);
        let repaired = km.partition.empty_clusters().len();
        let record = CycleRecord {
            cycle: t,
            subspace_distance: distance,
            lambdas: blocks.iter().map(|b| b.top.lambda).collect(),
            block_sizes: blocks.iter().map(|b| b.n_j()).collect(),
            orthonormality_error: orth,
            empty_clusters_repaired: repaired,
            metrics: score(ds, &next),
            seconds: timer.seconds(),
        };
        log::debug!("alg1 cycle {t}: distance {distance:?}");
        observe(&record, &next);
        state.history.push(record);
        state.m_prev = m;
        state.cycle = t + 1;
        partition = next;
        if distance.is_some_and(|d| d < params.tol) {
            state.converged = true;
            break;
        }
    }
    state.partition = partition;
    Ok(state)
}
