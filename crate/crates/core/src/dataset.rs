//! Datasets: loading, row normalization, and synthetic blobs.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::seed::{self, tag};
use crate::{Error, Result};

/// Row-major sample matrix with optional ground-truth labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    n: usize,
    d: usize,
    samples: Vec<f64>,
    labels: Option<Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset from a row-major buffer, rejecting NaN/Inf entries.
    pub fn new(
        name: impl Into<String>,
        n: usize,
        d: usize,
        samples: Vec<f64>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::EmptyDataset);
        }
        if samples.len() != n * d {
            return Err(Error::LengthMismatch {
                expected: n * d,
                got: samples.len(),
            });
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / d,
                col: pos % d,
            });
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: l.len(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            n,
            d,
            samples,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.d..(i + 1) * self.d]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of distinct ground-truth classes, if labels are present.
    pub fn n_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().max().map_or(0, |m| m + 1))
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// Scales every row to unit Euclidean norm.
pub fn normalize_rows(ds: &Dataset) -> Result<Dataset> {
    let mut out = ds.clone();
    for i in 0..ds.n {
        let row = &mut out.samples[i * ds.d..(i + 1) * ds.d];
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroRow(i));
        }
        row.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(out)
}

/// Per-feature z-scoring. Constant features are centered but not scaled.
pub fn standardize(ds: &Dataset) -> Dataset {
    let (n, d) = (ds.n, ds.d);
    let mut out = ds.clone();
    for j in 0..d {
        let mean = (0..n).map(|i| ds.samples[i * d + j]).sum::<f64>() / n as f64;
        let var = (0..n)
            .map(|i| (ds.samples[i * d + j] - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for i in 0..n {
            out.samples[i * d + j] = (ds.samples[i * d + j] - mean) / sd;
        }
    }
    out
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Maps raw label tokens to dense ids. All-integer labels are ordered
/// numerically; anything else is ordered by first occurrence.
fn reindex_labels(raw: &[String]) -> Vec<usize> {
    let ints: Option<Vec<i64>> = raw.iter().map(|s| s.parse::<i64>().ok()).collect();
    if let Some(ints) = ints {
        let mut uniq = ints.clone();
        uniq.sort_unstable();
        uniq.dedup();
        return ints
            .iter()
            .map(|v| uniq.binary_search(v).expect("value present"))
            .collect();
    }
    let mut ids: HashMap<&str, usize> = HashMap::new();
    raw.iter()
        .map(|s| {
            let next = ids.len();
            *ids.entry(s.as_str()).or_insert(next)
        })
        .collect()
}

/// Loads a comma-separated file. A first row with no numeric cell is taken
/// as a header. `label_column` picks the column holding ground truth.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(open(path)?, label_column).map(|ds| ds.with_name(name))
}

pub fn parse_csv(reader: impl Read, label_column: Option<usize>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut samples = Vec::new();
    let mut raw_labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut n = 0;
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 1;
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(line, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        if idx == 0 && rec.iter().all(|c| c.parse::<f64>().is_err()) {
            width = Some(rec.len());
            continue;
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {w} fields, found {}", rec.len()),
                })
            }
            _ => {}
        }
        if let Some(lc) = label_column {
            if lc >= rec.len() {
                return Err(Error::Parse {
                    line,
                    msg: format!("label column {lc} out of range for {} fields", rec.len()),
                });
            }
        }
        for (col, cell) in rec.iter().enumerate() {
            if Some(col) == label_column {
                raw_labels.push(cell.to_string());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("non-numeric feature `{cell}` in column {col}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: format!("non-finite feature in column {col}"),
                });
            }
            samples.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = samples.len() / n;
    let labels = label_column.map(|_| reindex_labels(&raw_labels));
    Dataset::new("csv", n, d, samples, labels)
}

/// Loads a LibSVM sparse file into a dense dataset. Returns the dataset and
/// the number of blank lines skipped.
pub fn load_libsvm(path: impl AsRef<Path>) -> Result<(Dataset, usize)> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let (ds, skipped) = parse_libsvm(BufReader::new(open(path)?))?;
    Ok((ds.with_name(name), skipped))
}

pub fn parse_libsvm(reader: impl BufRead) -> Result<(Dataset, usize)> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut raw_labels: Vec<f64> = Vec::new();
    let mut skipped = 0;
    let mut d = 0;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            skipped += 1;
            continue;
        }
        let mut toks = body.split_whitespace();
        let label_tok = toks.next().expect("non-empty line has a token");
        if label_tok.contains(':') {
            return Err(Error::Parse {
                line: lineno,
                msg: "missing label token".into(),
            });
        }
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad label `{label_tok}`"),
        })?;
        let mut feats = Vec::new();
        let mut last = 0usize;
        for tok in toks {
            let (i, v) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("expected idx:val, found `{tok}`"),
            })?;
            let i: usize = i.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad feature index `{i}`"),
            })?;
            let v: f64 = v.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad feature value `{v}`"),
            })?;
            if i == 0 || i <= last {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!(
                        "feature indices must be 1-based and increasing, got {i} after {last}"
                    ),
                });
            }
            last = i;
            d = d.max(i);
            feats.push((i - 1, v));
        }
        rows.push(feats);
        raw_labels.push(label);
    }
    if rows.is_empty() || d == 0 {
        return Err(Error::EmptyDataset);
    }
    if skipped > 0 {
        log::info!("libsvm: skipped {skipped} blank line(s)");
    }
    let n = rows.len();
    let mut samples = vec![0.0; n * d];
    for (r, feats) in rows.iter().enumerate() {
        for &(j, v) in feats {
            samples[r * d + j] = v;
        }
    }
    let mut uniq = raw_labels.clone();
    uniq.sort_by(|a, b| a.partial_cmp(b).expect("finite labels"));
    uniq.dedup();
    let labels = raw_labels
        .iter()
        .map(|l| uniq.iter().position(|u| u == l).expect("present"))
        .collect();
    Ok((
        Dataset::new("libsvm", n, d, samples, Some(labels))?,
        skipped,
    ))
}

/// Writes features followed by the label (if any) as the last column.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_csv_to(ds, &mut w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn write_csv_to(ds: &Dataset, w: &mut impl Write) -> std::io::Result<()> {
    let mut header: Vec<String> = (0..ds.d).map(|j| format!("f{j}")).collect();
    if ds.labels.is_some() {
        header.push("label".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for i in 0..ds.n {
        let mut cells: Vec<String> = ds.row(i).iter().map(|v| format!("{v:?}")).collect();
        if let Some(l) = &ds.labels {
            cells.push(l[i].to_string());
        }
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Synthetic blobs together with the generating centers.
#[derive(Debug, Clone)]
pub struct Blobs {
    pub dataset: Dataset,
    /// Row-major `c x d` centers.
    pub centers: Vec<f64>,
}

/// Isotropic unit-variance Gaussian blobs; see [`make_blobs_with_centers`].
pub fn make_blobs(
    c: usize,
    per_cluster: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    make_blobs_with_centers(c, per_cluster, d, separation, seed).map(|b| b.dataset)
}

/// Generates `c` unit-variance Gaussian clusters of `per_cluster` samples.
///
/// Centers sit on a sphere around the origin with well-spread directions, at
/// a radius chosen so that every pair of centers is at least `separation`
/// apart. Spread directions keep the clusters apart after row normalization.
pub fn make_blobs_with_centers(
    c: usize,
    per_cluster: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> Result<Blobs> {
    if c < 2 {
        return Err(Error::invalid("c", "need at least 2 clusters"));
    }
    if per_cluster < 1 {
        return Err(Error::invalid(
            "per_cluster",
            "need at least 1 sample per cluster",
        ));
    }
    if d < 1 {
        return Err(Error::invalid("d", "need at least 1 dimension"));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(Error::invalid("separation", "must be positive"));
    }
    let mut rng = seed::rng(seed::derive(seed, &[tag::BLOBS]));
    let dirs = spread_directions(c, d, &mut rng);
    let mut min_gap = f64::INFINITY;
    for a in 0..c {
        for b in a + 1..c {
            min_gap = min_gap.min(crate::linalg::sq_dist(&dirs[a], &dirs[b]).sqrt());
        }
    }
    let radius = separation / min_gap;
    let centers: Vec<f64> = dirs.iter().flatten().map(|v| v * radius).collect();

    let n = c * per_cluster;
    let mut samples = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for k in 0..c {
        for _ in 0..per_cluster {
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                samples.push(centers[k * d + j] + z);
            }
            labels.push(k);
        }
    }
    let dataset = Dataset::new(format!("blobs-c{c}-d{d}"), n, d, samples, Some(labels))?;
    Ok(Blobs { dataset, centers })
}

fn spread_directions(c: usize, d: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    match d {
        1 => (0..c)
            .map(|k| vec![k as f64 - (c as f64 - 1.0) / 2.0])
            .collect(),
        2 => {
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            (0..c)
                .map(|k| {
                    let a = phase + std::f64::consts::TAU * k as f64 / c as f64;
                    vec![a.cos(), a.sin()]
                })
                .collect()
        }
        _ => {
            // rejection sampling for pairwise angles of at least 60 degrees
            let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(c);
            while dirs.len() < c {
                let mut best: Option<(f64, Vec<f64>)> = None;
                for _ in 0..1000 {
                    let v = random_unit(d, rng);
                    let gap = dirs
                        .iter()
                        .map(|u| crate::linalg::sq_dist(u, &v).sqrt())
                        .fold(f64::INFINITY, f64::min);
                    if gap >= 1.0 {
                        best = Some((gap, v));
                        break;
                    }
                    if best.as_ref().is_none_or(|(g, _)| gap > *g) {
                        best = Some((gap, v));
                    }
                }
                dirs.push(best.expect("at least one candidate").1);
            }
            dirs
        }
    }
}

fn random_unit(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_with_string_labels() {
        let ds = parse_csv("1,0,a\n0,1,a\n5,5,b\n".as_bytes(), Some(2)).unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 2));
        assert_eq!(ds.labels().unwrap(), &[0, 0, 1]);
        assert_eq!(ds.row(2), &[5.0, 5.0]);
    }

    #[test]
    fn csv_bad_cell_names_line() {
        let err = parse_csv("1,x,0\n".as_bytes(), None).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn csv_header_is_skipped_and_arity_checked() {
        let ds = parse_csv("x,y\n1,2\n3,4\n".as_bytes(), None).unwrap();
        assert_eq!(ds.n(), 2);
        let err = parse_csv("1,2\n3\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn csv_empty_is_error() {
        assert!(matches!(
            parse_csv("".as_bytes(), None),
            Err(Error::EmptyDataset)
        ));
        assert!(matches!(
            parse_csv("a,b\n".as_bytes(), None),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn libsvm_dense_expansion() {
        let (ds, skipped) = parse_libsvm("1 1:0.5 3:0.5\n".as_bytes()).unwrap();
        assert_eq!(skipped, 0);
        assert_eq!(ds.row(0), &[0.5, 0.0, 0.5]);
        assert_eq!(ds.labels().unwrap(), &[0]);
    }

    #[test]
    fn libsvm_reindexes_and_skips_blank_lines() {
        let (ds, skipped) = parse_libsvm("7 1:1\n\n3 2:1\n".as_bytes()).unwrap();
        assert_eq!(skipped, 1);
        assert_eq!(ds.labels().unwrap(), &[1, 0]);
        assert_eq!(ds.d(), 2);
    }

    #[test]
    fn libsvm_errors() {
        assert!(matches!(
            parse_libsvm("1 3:1 2:1\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_libsvm("1 1:1\n1:0.5 2:1\n".as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn normalize_examples() {
        let ds = Dataset::new("t", 2, 2, vec![3.0, 4.0, 1.0, 0.0], None).unwrap();
        let out = normalize_rows(&ds).unwrap();
        assert!((out.row(0)[0] - 0.6).abs() < 1e-15);
        assert!((out.row(0)[1] - 0.8).abs() < 1e-15);
        assert_eq!(out.row(1), &[1.0, 0.0]);

        let zero = Dataset::new("t", 2, 2, vec![1.0, 1.0, 0.0, 0.0], None).unwrap();
        assert!(matches!(normalize_rows(&zero), Err(Error::ZeroRow(1))));
    }

    #[test]
    fn dataset_rejects_nan() {
        assert!(matches!(
            Dataset::new("t", 1, 2, vec![1.0, f64::NAN], None),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn blobs_shape_and_balance() {
        let ds = make_blobs(3, 100, 2, 10.0, 7).unwrap();
        assert_eq!((ds.n(), ds.d()), (300, 2));
        let l = ds.labels().unwrap();
        for k in 0..3 {
            assert_eq!(l.iter().filter(|&&x| x == k).count(), 100);
        }
    }

    #[test]
    fn blobs_are_deterministic() {
        let a = make_blobs(3, 100, 2, 10.0, 7).unwrap();
        let b = make_blobs(3, 100, 2, 10.0, 7).unwrap();
        assert_eq!(a, b);
        let c = make_blobs(3, 100, 2, 10.0, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn blob_centers_respect_separation() {
        for d in [1, 2, 3, 8] {
            let b = make_blobs_with_centers(4, 1, d, 10.0, 3).unwrap();
            for i in 0..4 {
                for j in i + 1..4 {
                    let dist = crate::linalg::sq_dist(
                        &b.centers[i * d..(i + 1) * d],
                        &b.centers[j * d..(j + 1) * d],
                    )
                    .sqrt();
                    assert!(dist >= 10.0 - 1e-9, "d={d} dist={dist}");
                }
            }
        }
    }

    #[test]
    fn wide_separation_nearest_center_matches_labels() {
        for seed in 0..5 {
            let b = make_blobs_with_centers(3, 100, 2, 50.0, seed).unwrap();
            let ds = &b.dataset;
            let labels = ds.labels().unwrap();
            for i in 0..ds.n() {
                let nearest = (0..3)
                    .min_by(|&a, &c| {
                        let da = crate::linalg::sq_dist(ds.row(i), &b.centers[a * 2..a * 2 + 2]);
                        let dc = crate::linalg::sq_dist(ds.row(i), &b.centers[c * 2..c * 2 + 2]);
                        da.partial_cmp(&dc).unwrap()
                    })
                    .unwrap();
                assert_eq!(nearest, labels[i]);
            }
        }
    }

    #[test]
    fn invalid_blob_parameters() {
        assert!(make_blobs(1, 10, 2, 1.0, 0).is_err());
        assert!(make_blobs(2, 0, 2, 1.0, 0).is_err());
        assert!(make_blobs(2, 10, 2, 0.0, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ds = make_blobs(2, 5, 3, 4.0, 1).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&ds, &mut buf).unwrap();
        let back = parse_csv(buf.as_slice(), Some(3)).unwrap();
        assert_eq!(back.labels(), ds.labels());
        for (a, b) in back.samples().iter().zip(ds.samples()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn standardize_gives_zero_mean_unit_var() {
        let ds = Dataset::new("t", 3, 2, vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0], None).unwrap();
        let z = standardize(&ds);
        let col0: Vec<f64> = (0..3).map(|i| z.row(i)[0]).collect();
        assert!(col0.iter().sum::<f64>().abs() < 1e-12);
        assert!((col0.iter().map(|v| v * v).sum::<f64>() / 3.0 - 1.0).abs() < 1e-12);
        assert!((0..3).all(|i| z.row(i)[1] == 0.0));
    }
}
