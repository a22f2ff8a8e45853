//! Run configuration and the glue that turns one into a clustering.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clock::Timer;
use crate::dataset::{self, Dataset};
use crate::kernel::KernelParams;
use crate::kmeans::{self, KmeansParams};
use crate::metrics::MetricsReport;
use crate::partition::Partition;
use crate::restart::{self, Alg1Params, Init};
use crate::rotation::{self, Alg2Params};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSpec {
    Csv {
        path: PathBuf,
        /// Zero-based label column; `None` for unlabeled data.
        #[serde(default)]
        label_column: Option<usize>,
    },
    Libsvm {
        path: PathBuf,
    },
    Blobs {
        c: usize,
        per_cluster: usize,
        #[serde(default = "default_blob_dim")]
        d: usize,
        separation: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_blob_dim() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Alg1,
    Alg2,
    /// Plain K-means on the prepared samples.
    Kmeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitSpec {
    Random,
    Kmeans,
    /// CSV of `sample_index,cluster` rows.
    File(PathBuf),
}

/// Everything needed to reproduce one run. The run seed drives the initial
/// partition, every K-means call, and landmark sampling (it overrides
/// `kernel.seed`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DataSpec,
    pub algorithm: Algorithm,
    /// Defaults to the number of label classes.
    #[serde(default)]
    pub c: Option<usize>,
    #[serde(default = "default_init")]
    pub init: InitSpec,
    #[serde(default)]
    pub kernel: KernelParams,
    #[serde(default = "default_itermax")]
    pub itermax: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_inner_iter")]
    pub inner_iter: usize,
    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
    #[serde(default)]
    pub kmeans: KmeansParams,
    /// Scale rows to unit norm before clustering.
    #[serde(default = "yes")]
    pub normalize: bool,
    /// Z-score columns before row normalization.
    #[serde(default)]
    pub zscore: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_init() -> InitSpec {
    InitSpec::Random
}
fn default_itermax() -> usize {
    30
}
fn default_tol() -> f64 {
    1e-3
}
fn default_lambda() -> f64 {
    1.0
}
fn default_inner_iter() -> usize {
    100
}
fn default_inner_tol() -> f64 {
    1e-8
}
fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn new(dataset: DataSpec, algorithm: Algorithm) -> Self {
        Self {
            dataset,
            algorithm,
            c: None,
            init: default_init(),
            kernel: KernelParams::default(),
            itermax: default_itermax(),
            tol: default_tol(),
            lambda: default_lambda(),
            inner_iter: default_inner_iter(),
            inner_tol: default_inner_tol(),
            kmeans: KmeansParams::default(),
            normalize: true,
            zscore: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if let Some(c) = self.c {
            if c < 2 {
                return Err(Error::invalid("c", "need at least 2 clusters"));
            }
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid("tol", "must be nonnegative"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda", "must be finite and nonnegative"));
        }
        if self.inner_iter == 0 {
            return Err(Error::invalid("inner_iter", "must be at least 1"));
        }
        if self.kmeans.restarts == 0 {
            return Err(Error::invalid("kmeans.restarts", "must be at least 1"));
        }
        match &self.dataset {
            DataSpec::Csv { path, .. } | DataSpec::Libsvm { path }
                if path.as_os_str().is_empty() =>
            {
                Err(Error::invalid("dataset.path", "is empty"))
            }
            _ => Ok(()),
        }
    }

    fn alg1(&self) -> Alg1Params {
        Alg1Params {
            kernel: KernelParams {
                seed: self.seed,
                ..self.kernel.clone()
            },
            itermax: self.itermax,
            tol: self.tol,
            kmeans: self.kmeans.clone(),
            seed: self.seed,
        }
    }

    fn alg2(&self) -> Alg2Params {
        Alg2Params {
            kernel: KernelParams {
                seed: self.seed,
                ..self.kernel.clone()
            },
            itermax: self.itermax,
            tol: self.tol,
            lambda: self.lambda,
            inner_iter: self.inner_iter,
            inner_tol: self.inner_tol,
        }
    }
}

impl Error {
    /// True for errors caused by bad input rather than by a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::EmptyDataset
                | Error::ZeroRow(_)
                | Error::NonFinite { .. }
                | Error::InvalidParam { .. }
                | Error::LengthMismatch { .. }
        )
    }
}

/// Loads the raw dataset named by `data`.
pub fn load_dataset(data: &DataSpec) -> Result<Dataset> {
    match data {
        DataSpec::Csv { path, label_column } => dataset::load_csv(path, *label_column),
        DataSpec::Libsvm { path } => {
            let (ds, skipped) = dataset::load_libsvm(path)?;
            if skipped > 0 {
                log::info!("skipped {skipped} blank line(s) in {}", path.display());
            }
            Ok(ds)
        }
        DataSpec::Blobs {
            c,
            per_cluster,
            d,
            separation,
            seed,
        } => Ok(dataset::make_blobs(
            *c,
            *per_cluster,
            *d,
            *separation,
            *seed,
        )?),
    }
}

/// Optional z-scoring, then optional row normalization.
pub fn prepare(ds: &Dataset, zscore: bool, normalize: bool) -> Result<Dataset> {
    let mut out = if zscore {
        dataset::standardize(ds)
    } else {
        ds.clone()
    };
    if normalize {
        out = dataset::normalize_rows(&out)?;
    }
    Ok(out)
}

/// Reads `sample_index,cluster` rows (header optional) into a partition of
/// `n` samples with `c` clusters.
pub fn read_partition(path: &Path, n: usize, c: usize) -> Result<Partition> {
    let io = |e: csv::Error| Error::Parse {
        line: e.position().map_or(0, |p| p.line() as usize),
        msg: e.to_string(),
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io {
                path: path.display().to_string(),
                source,
            },
            other => Error::Parse {
                line: 0,
                msg: format!("{other:?}"),
            },
        })?;
    let mut assign = vec![None; n];
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(io)?;
        let line = k + 1;
        if rec.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        let (Ok(i), Ok(a)) = (rec[0].parse::<usize>(), rec[1].parse::<usize>()) else {
            if line == 1 {
                continue;
            }
            return Err(Error::Parse {
                line,
                msg: "fields must be nonnegative integers".into(),
            });
        };
        if i >= n {
            return Err(Error::Parse {
                line,
                msg: format!("sample index {i} out of range for {n} samples"),
            });
        }
        assign[i] = Some(a);
    }
    let assign = assign
        .into_iter()
        .enumerate()
        .map(|(i, a)| a.ok_or_else(|| Error::invalid("init", format!("sample {i} has no cluster"))))
        .collect::<Result<Vec<_>>>()?;
    Partition::new(assign, c)
}

/// Writes `sample_index,cluster` rows with a header.
pub fn write_partition(p: &Partition, w: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "sample_index,cluster")?;
    for (i, a) in p.assign().iter().enumerate() {
        writeln!(w, "{i},{a}")?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub partition: Partition,
    pub metrics: Option<MetricsReport>,
    /// Per-cycle records, one JSON object each.
    pub history: Vec<serde_json::Value>,
    pub cycles: usize,
    pub converged: bool,
    pub tau: Option<f64>,
    /// Wall time of initialization plus clustering; dataset loading and
    /// preparation excluded.
    pub seconds: f64,
}

/// Runs `cfg` on an already prepared dataset.
pub fn run_prepared(cfg: &RunConfig, ds: &Dataset) -> Result<RunOutcome> {
    cfg.validate()?;
    let c = match (cfg.c, ds.n_classes()) {
        (Some(c), _) => c,
        (None, Some(k)) => k,
        (None, None) => return Err(Error::invalid("c", "required for unlabeled data")),
    };
    let timer = Timer::start();
    let init = || -> Result<Init> {
        Ok(match &cfg.init {
            InitSpec::Random => Init::Random(cfg.seed),
            InitSpec::Kmeans => Init::Given(kmeans::kmeans_dataset(ds, c, &cfg.kmeans, cfg.seed)?),
            InitSpec::File(path) => Init::Given(read_partition(path, ds.n(), c)?),
        })
    };
    let (partition, history, cycles, converged, tau) = match cfg.algorithm {
        Algorithm::Kmeans => {
            let p = kmeans::kmeans_dataset(ds, c, &cfg.kmeans, cfg.seed)?;
            (p, Vec::new(), 0, true, None)
        }
        Algorithm::Alg1 => {
            let st = restart::run_algorithm1(ds, c, &init()?, &cfg.alg1())?;
            let h = st
                .history
                .iter()
                .map(|r| serde_json::to_value(r).expect("records serialize"))
                .collect();
            (st.partition, h, st.cycle, st.converged, Some(st.tau))
        }
        Algorithm::Alg2 => {
            let st = rotation::run_algorithm2(ds, c, &init()?, &cfg.alg2())?;
            let h = st
                .history
                .iter()
                .map(|r| serde_json::to_value(r).expect("records serialize"))
                .collect();
            (st.partition, h, st.cycle, st.converged, Some(st.tau))
        }
    };
    let seconds = timer.seconds();
    let metrics = restart::score(ds, &partition);
    Ok(RunOutcome {
        partition,
        metrics,
        history,
        cycles,
        converged,
        tau,
        seconds,
    })
}

/// Loads, prepares, and runs.
pub fn run_config(cfg: &RunConfig) -> Result<(Dataset, RunOutcome)> {
    cfg.validate()?;
    let raw = load_dataset(&cfg.dataset)?;
    let ds = prepare(&raw, cfg.zscore, cfg.normalize)?;
    let out = run_prepared(cfg, &ds)?;
    Ok((ds, out))
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub name: String,
    pub runs: usize,
    pub failures: Vec<String>,
    /// Mean over successful labeled runs.
    pub mean: Option<MetricsReport>,
    pub mean_seconds: Option<f64>,
}

/// Runs `cfg` `runs` times with seeds `seed + k`. Failed runs are recorded
/// in the row rather than aborting.
pub fn bench(name: &str, cfg: &RunConfig, runs: usize) -> Result<BenchRow> {
    cfg.validate()?;
    let raw = load_dataset(&cfg.dataset)?;
    let ds = prepare(&raw, cfg.zscore, cfg.normalize)?;
    let mut reports = Vec::new();
    let mut secs = Vec::new();
    let mut failures = Vec::new();
    for k in 0..runs {
        let seed = cfg.seed.wrapping_add(k as u64);
        log::info!("bench {name}: run {k}, seed {seed}");
        let run_cfg = RunConfig {
            seed,
            ..cfg.clone()
        };
        match run_prepared(&run_cfg, &ds) {
            Ok(out) => {
                secs.push(out.seconds);
                reports.extend(out.metrics);
            }
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    Ok(BenchRow {
        name: name.to_string(),
        runs,
        failures,
        mean: MetricsReport::mean(&reports),
        mean_seconds: (!secs.is_empty()).then(|| secs.iter().sum::<f64>() / secs.len() as f64),
    })
}
