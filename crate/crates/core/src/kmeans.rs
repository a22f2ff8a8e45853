//! K-means with D²-weighted seeding.
//!
//! Points are passed row-major as `&[f64]` plus a dimension. Empty clusters
//! are refilled with the point farthest from its centroid so exactly `c`
//! clusters always come back.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::sq_dist;
use crate::partition::{centroids, Partition};
use crate::seed::{self, tag};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KmeansParams {
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KmeansParams {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub partition: Partition,
    /// Row-major `c x dim` final centroids.
    pub centroids: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after each centroid update.
    pub trace: Vec<f64>,
}

/// Sum of squared distances from each point to its cluster's centroid.
pub fn objective(points: &[f64], dim: usize, p: &Partition, cents: &[f64]) -> f64 {
    p.assign()
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            sq_dist(
                &points[i * dim..(i + 1) * dim],
                &cents[a * dim..(a + 1) * dim],
            )
        })
        .sum()
}

/// D²-weighted sequential seeding. When every remaining point coincides
/// with a chosen centroid, further centroids duplicate a uniformly drawn
/// point and a warning is logged.
pub fn kmeanspp_seed(points: &[f64], dim: usize, c: usize, seed: u64) -> Result<Vec<f64>> {
    let n = points.len() / dim.max(1);
    if c == 0 || n < c {
        return Err(Error::invalid("c", format!("{c} centroids for {n} points")));
    }
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = seed::rng(seed);
    let mut cents = Vec::with_capacity(c * dim);
    let first = rng.random_range(0..n);
    cents.extend_from_slice(row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();
    let mut warned = false;
    for _ in 1..c {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // guard against landing on a zero-weight tail through roundoff
            while d2[chosen] == 0.0 {
                chosen -= 1;
            }
            chosen
        } else {
            if !warned {
                log::warn!("k-means++: distinct points exhausted, duplicating centroids");
                warned = true;
            }
            rng.random_range(0..n)
        };
        let start = cents.len();
        cents.extend_from_slice(row(pick));
        let newest = cents[start..start + dim].to_vec();
        for (i, w) in d2.iter_mut().enumerate() {
            *w = w.min(sq_dist(row(i), &newest));
        }
    }
    Ok(cents)
}

fn assign_nearest(points: &[f64], dim: usize, cents: &[f64], c: usize) -> Vec<usize> {
    let n = points.len() / dim;
    let job = |i: usize| {
        let x = &points[i * dim..(i + 1) * dim];
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for k in 0..c {
            let d = sq_dist(x, &cents[k * dim..(k + 1) * dim]);
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        best
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if n >= 4096 {
            return (0..n).into_par_iter().map(job).collect();
        }
    }
    (0..n).map(job).collect()
}

/// Lloyd iterations from the given centroids. Stops when no centroid moves
/// by `tol` or more, or after `max_iter` iterations.
pub fn lloyd(points: &[f64], dim: usize, init: &[f64], max_iter: usize, tol: f64) -> KmeansResult {
    let c = init.len() / dim;
    let mut cents = init.to_vec();
    let mut partition = Partition::new(vec![0; points.len() / dim], c).expect("ids in range");
    let mut trace: Vec<f64> = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let assign = assign_nearest(points, dim, &cents, c);
        partition = Partition::new(assign, c).expect("ids in range");
        partition.repair_empty(points, dim);
        let next = centroids(points, dim, &partition);
        let shift = (0..c)
            .map(|k| {
                sq_dist(
                    &cents[k * dim..(k + 1) * dim],
                    &next[k * dim..(k + 1) * dim],
                )
                .sqrt()
            })
            .fold(0.0, f64::max);
        cents = next;
        let obj = objective(points, dim, &partition, &cents);
        if let Some(&prev) = trace.last() {
            debug_assert!(
                obj <= prev + 1e-9 * prev.abs().max(1.0),
                "lloyd objective increased: {prev} -> {obj}"
            );
        }
        trace.push(obj);
        if shift < tol {
            break;
        }
    }
    let objective = *trace.last().expect("at least one iteration");
    KmeansResult {
        partition,
        centroids: cents,
        objective,
        iterations,
        trace,
    }
}

/// Best of `restarts` seeded Lloyd runs. Restart 0 uses `seed` itself.
pub fn kmeans(
    points: &[f64],
    dim: usize,
    c: usize,
    params: &KmeansParams,
    seed: u64,
) -> Result<KmeansResult> {
    if params.restarts == 0 {
        return Err(Error::invalid("restarts", "must be at least 1"));
    }
    let mut best: Option<KmeansResult> = None;
    for r in 0..params.restarts {
        let s = if r == 0 {
            seed
        } else {
            seed::derive(seed, &[tag::RESTART, r as u64])
        };
        let init = kmeanspp_seed(points, dim, c, s)?;
        let res = lloyd(points, dim, &init, params.max_iter, params.tol);
        if best.as_ref().is_none_or(|b| res.objective < b.objective) {
            best = Some(res);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// K-means on raw samples, used as a baseline and as an initial partition.
pub fn kmeans_dataset(
    ds: &crate::Dataset,
    c: usize,
    params: &KmeansParams,
    seed: u64,
) -> Result<Partition> {
    kmeans(
        ds.samples(),
        ds.d(),
        c,
        params,
        seed::derive(seed, &[tag::KMEANS]),
    )
    .map(|r| r.partition)
}
