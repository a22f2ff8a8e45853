use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::sq_dist;
use crate::seed::{self, tag};
use crate::{Error, Result};

/// Hard assignment of `n` samples to `c` clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    assign: Vec<usize>,
    c: usize,
}

impl Partition {
    pub fn new(assign: Vec<usize>, c: usize) -> Result<Self> {
        if let Some(&bad) = assign.iter().find(|&&a| a >= c) {
            return Err(Error::invalid(
                "assign",
                format!("cluster id {bad} out of range for c = {c}"),
            ));
        }
        Ok(Self { assign, c })
    }

    /// Wraps ground-truth labels; `c` is one past the largest label.
    pub fn from_labels(labels: &[usize]) -> Self {
        let c = labels.iter().max().map_or(1, |m| m + 1);
        Self {
            assign: labels.to_vec(),
            c,
        }
    }

    /// Uniformly random assignment followed by [`Partition::repair_empty`]
    /// against `points`.
    pub fn random(n: usize, c: usize, seed: u64, points: &[f64], dim: usize) -> Result<Self> {
        if n < c {
            return Err(Error::invalid("c", format!("{c} clusters for {n} samples")));
        }
        let mut rng = seed::rng(seed::derive(seed, &[tag::INIT]));
        let assign = (0..n).map(|_| rng.random_range(0..c)).collect();
        let mut p = Self { assign, c };
        p.repair_empty(points, dim);
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.assign.len()
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn assign(&self) -> &[usize] {
        &self.assign
    }

    #[inline]
    pub fn of(&self, i: usize) -> usize {
        self.assign[i]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.c];
        for &a in &self.assign {
            s[a] += 1;
        }
        s
    }

    pub fn empty_clusters(&self) -> Vec<usize> {
        self.sizes()
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 0)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.sizes().iter().all(|&s| s > 0)
    }

    /// Member indices of every cluster, each in ascending order.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut b = vec![Vec::new(); self.c];
        for (i, &a) in self.assign.iter().enumerate() {
            b[a].push(i);
        }
        b
    }

    /// Binary `n x c` indicator matrix with exactly one 1 per row.
    pub fn to_indicator(&self) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.n(), self.c);
        for (i, &a) in self.assign.iter().enumerate() {
            y[(i, a)] = 1.0;
        }
        y
    }

    pub fn from_indicator(y: &DMatrix<f64>) -> Result<Self> {
        let mut assign = Vec::with_capacity(y.nrows());
        for i in 0..y.nrows() {
            let row = y.row(i);
            let ones: Vec<usize> = (0..y.ncols()).filter(|&j| row[j] == 1.0).collect();
            let zeros = (0..y.ncols()).filter(|&j| row[j] == 0.0).count();
            if ones.len() != 1 || zeros + 1 != y.ncols() {
                return Err(Error::invalid(
                    "indicator",
                    format!("row {i} is not one-hot"),
                ));
            }
            assign.push(ones[0]);
        }
        Ok(Self {
            assign,
            c: y.ncols(),
        })
    }

    /// Fills every empty cluster with the point farthest from its current
    /// centroid, taken from a cluster that keeps at least one member. Ties go
    /// to the lowest sample index. `points` is row-major with `dim` columns.
    /// Returns how many clusters were repaired.
    pub fn repair_empty(&mut self, points: &[f64], dim: usize) -> usize {
        debug_assert_eq!(points.len(), self.n() * dim);
        let mut repaired = 0;
        for k in 0..self.c {
            let sizes = self.sizes();
            if sizes[k] > 0 {
                continue;
            }
            let centroids = centroids(points, dim, self);
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.n() {
                let a = self.assign[i];
                if sizes[a] < 2 {
                    continue;
                }
                let dist = sq_dist(
                    &points[i * dim..(i + 1) * dim],
                    &centroids[a * dim..(a + 1) * dim],
                );
                if best.is_none_or(|(_, bd)| dist > bd) {
                    best = Some((i, dist));
                }
            }
            match best {
                Some((i, _)) => {
                    self.assign[i] = k;
                    repaired += 1;
                }
                None => break,
            }
        }
        if repaired > 0 {
            log::debug!("repaired {repaired} empty cluster(s)");
        }
        repaired
    }
}

/// Row-major `c x dim` cluster means; empty clusters get a zero centroid.
pub fn centroids(points: &[f64], dim: usize, p: &Partition) -> Vec<f64> {
    let mut sums = vec![0.0; p.c() * dim];
    let mut counts = vec![0usize; p.c()];
    for (i, &a) in p.assign().iter().enumerate() {
        counts[a] += 1;
        for j in 0..dim {
            sums[a * dim + j] += points[i * dim + j];
        }
    }
    for k in 0..p.c() {
        if counts[k] > 0 {
            for j in 0..dim {
                sums[k * dim + j] /= counts[k] as f64;
            }
        }
    }
    sums
}
