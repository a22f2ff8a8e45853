//! External clustering criteria: ACC, NMI, purity, ARI, and pairwise
//! precision / recall / F-score, plus their mean.

use serde::{Deserialize, Serialize, Serializer};

use crate::{Error, Result};

fn round4<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64((v * 1e4).round() / 1e4)
}

/// The seven criteria and their arithmetic mean. Serializes with values
/// rounded to four decimals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(serialize_with = "round4")]
    pub acc: f64,
    #[serde(serialize_with = "round4")]
    pub nmi: f64,
    #[serde(serialize_with = "round4")]
    pub purity: f64,
    #[serde(serialize_with = "round4")]
    pub ari: f64,
    #[serde(serialize_with = "round4")]
    pub precision: f64,
    #[serde(serialize_with = "round4")]
    pub recall: f64,
    #[serde(serialize_with = "round4")]
    pub f_score: f64,
    #[serde(serialize_with = "round4")]
    pub average: f64,
}

impl MetricsReport {
    pub fn as_array(&self) -> [f64; 8] {
        [
            self.acc,
            self.nmi,
            self.purity,
            self.ari,
            self.precision,
            self.recall,
            self.f_score,
            self.average,
        ]
    }

    pub const COLUMNS: [&'static str; 8] = [
        "ACC",
        "NMI",
        "Purity",
        "ARI",
        "precision",
        "Recall",
        "F-score",
        "Average",
    ];

    /// Element-wise mean of several reports.
    pub fn mean(reports: &[MetricsReport]) -> Option<MetricsReport> {
        if reports.is_empty() {
            return None;
        }
        let k = reports.len() as f64;
        let mut acc = [0.0; 8];
        for r in reports {
            for (a, v) in acc.iter_mut().zip(r.as_array()) {
                *a += v / k;
            }
        }
        Some(MetricsReport {
            acc: acc[0],
            nmi: acc[1],
            purity: acc[2],
            ari: acc[3],
            precision: acc[4],
            recall: acc[5],
            f_score: acc[6],
            average: acc[7],
        })
    }
}

/// Contingency table between two labelings.
#[derive(Debug, Clone)]
pub struct Contingency {
    pub table: Vec<Vec<u64>>,
    pub rows: Vec<u64>,
    pub cols: Vec<u64>,
    pub n: u64,
}

impl Contingency {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::LengthMismatch {
                expected: truth.len(),
                got: pred.len(),
            });
        }
        let kp = pred.iter().max().map_or(0, |m| m + 1);
        let kt = truth.iter().max().map_or(0, |m| m + 1);
        let mut table = vec![vec![0u64; kt]; kp];
        for (&p, &t) in pred.iter().zip(truth) {
            table[p][t] += 1;
        }
        let rows = table.iter().map(|r| r.iter().sum()).collect();
        let cols = (0..kt).map(|j| table.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            table,
            rows,
            cols,
            n: pred.len() as u64,
        })
    }
}

/// Minimum-cost perfect assignment on a square cost matrix
/// (shortest augmenting path Hungarian method, `O(k^3)`).
/// Returns `col_of_row`.
pub fn hungarian_min(cost: &[Vec<f64>]) -> Vec<usize> {
    let k = cost.len();
    if k == 0 {
        return Vec::new();
    }
    // 1-based potentials; column 0 is a virtual source
    let mut u = vec![0.0; k + 1];
    let mut v = vec![0.0; k + 1];
    let mut row_of_col = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=k {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=k {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0; k];
    for j in 1..=k {
        if row_of_col[j] > 0 {
            col_of_row[row_of_col[j] - 1] = j - 1;
        }
    }
    col_of_row
}

/// Best matched fraction over all bijections between predicted clusters and
/// classes. The contingency table is padded square with zeros.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let ct = Contingency::new(pred, truth)?;
    if ct.n == 0 {
        return Ok(1.0);
    }
    let k = ct.rows.len().max(ct.cols.len());
    let max = ct.n as f64;
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| max - ct.table.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0) as f64)
                .collect()
        })
        .collect();
    let assign = hungarian_min(&cost);
    let matched: f64 = assign
        .iter()
        .enumerate()
        .map(|(i, &j)| max - cost[i][j])
        .sum();
    Ok(matched / ct.n as f64)
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the geometric mean of the entropies.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let ct = Contingency::new(pred, truth)?;
    if ct.n == 0 {
        return Ok(1.0);
    }
    let n = ct.n as f64;
    let hp = entropy(&ct.rows, n);
    let ht = entropy(&ct.cols, n);
    if hp == 0.0 || ht == 0.0 {
        // both trivial means both are a single cluster, i.e. identical
        return Ok(if hp == 0.0 && ht == 0.0 { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for (i, row) in ct.table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (ct.rows[i] as f64 * ct.cols[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

pub fn purity(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let ct = Contingency::new(pred, truth)?;
    if ct.n == 0 {
        return Ok(1.0);
    }
    let hit: u64 = ct
        .table
        .iter()
        .map(|r| r.iter().copied().max().unwrap_or(0))
        .sum();
    Ok(hit as f64 / ct.n as f64)
}

/// Pair counts over the `n(n-1)/2` unordered sample pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    /// Together in both labelings.
    pub tp: u64,
    /// Together in the prediction only.
    pub fp: u64,
    /// Together in the truth only.
    pub fn_: u64,
    pub tn: u64,
}

fn comb2(x: u64) -> u64 {
    x * x.saturating_sub(1) / 2
}

pub fn pair_counts(pred: &[usize], truth: &[usize]) -> Result<PairCounts> {
    let ct = Contingency::new(pred, truth)?;
    let together_both: u64 = ct.table.iter().flatten().map(|&x| comb2(x)).sum();
    let together_pred: u64 = ct.rows.iter().map(|&x| comb2(x)).sum();
    let together_truth: u64 = ct.cols.iter().map(|&x| comb2(x)).sum();
    let total = comb2(ct.n);
    Ok(PairCounts {
        tp: together_both,
        fp: together_pred - together_both,
        fn_: together_truth - together_both,
        tn: total + together_both - together_pred - together_truth,
    })
}

/// Adjusted Rand index from the contingency table.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let ct = Contingency::new(pred, truth)?;
    let index: f64 = ct.table.iter().flatten().map(|&x| comb2(x) as f64).sum();
    let a: f64 = ct.rows.iter().map(|&x| comb2(x) as f64).sum();
    let b: f64 = ct.cols.iter().map(|&x| comb2(x) as f64).sum();
    let total = comb2(ct.n) as f64;
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = a * b / total;
    let max_index = 0.5 * (a + b);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(if identical_up_to_relabeling(pred, truth) {
            1.0
        } else {
            0.0
        });
    }
    Ok((index - expected) / denom)
}

fn identical_up_to_relabeling(a: &[usize], b: &[usize]) -> bool {
    use std::collections::HashMap;
    let mut fwd: HashMap<usize, usize> = HashMap::new();
    let mut bwd: HashMap<usize, usize> = HashMap::new();
    a.iter()
        .zip(b)
        .all(|(&x, &y)| *fwd.entry(x).or_insert(y) == y && *bwd.entry(y).or_insert(x) == x)
}

/// Pairwise precision, recall, and F-score.
pub fn precision_recall_f(pred: &[usize], truth: &[usize]) -> Result<(f64, f64, f64)> {
    let pc = pair_counts(pred, truth)?;
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let p = ratio(pc.tp, pc.tp + pc.fp);
    let r = ratio(pc.tp, pc.tp + pc.fn_);
    let f = if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    };
    Ok((p, r, f))
}

pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<MetricsReport> {
    let acc = accuracy(pred, truth)?;
    let nmi = nmi(pred, truth)?;
    let purity = purity(pred, truth)?;
    let ari = ari(pred, truth)?;
    let (precision, recall, f_score) = precision_recall_f(pred, truth)?;
    let average = (acc + nmi + purity + ari + precision + recall + f_score) / 7.0;
    Ok(MetricsReport {
        acc,
        nmi,
        purity,
        ari,
        precision,
        recall,
        f_score,
        average,
    })
}
