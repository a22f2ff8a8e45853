//! Browser bindings for the demo page in `www/`.
//!
//! The page generates 2-D blobs, runs either driver while recording the
//! partition after every cycle, and checks the approximation bounds on the
//! ground-truth blocks. Each export is a thin wrapper over a plain function
//! that returns JSON, so the logic is testable without a browser.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use restartsc::dataset::{make_blobs, normalize_rows};
use restartsc::kernel::{KernelParams, SizePolicy, TauPolicy};
use restartsc::kmeans::{kmeans_dataset, KmeansParams};
use restartsc::restart::{run_algorithm1_with, Alg1Params, Init};
use restartsc::rotation::{run_algorithm2_with, Alg2Params};
use restartsc::theory::{analyze, PerturbationReport};
use restartsc::{Dataset, MetricsReport, Partition};

#[derive(Debug, Serialize)]
pub struct Cycle {
    pub cycle: usize,
    pub assign: Vec<usize>,
    /// Subspace distance for the restart driver, objective for the rotation driver.
    pub score: Option<f64>,
    pub metrics: Option<MetricsReport>,
}

#[derive(Debug, Serialize)]
pub struct Trace {
    pub initial: Vec<usize>,
    pub cycles: Vec<Cycle>,
    pub converged: bool,
    pub tau: f64,
}

#[derive(Debug, Serialize)]
pub struct Spectrum {
    pub block_sizes: Vec<usize>,
    pub report: PerturbationReport,
}

/// Labeled 2-D blobs and their row-normalized copy.
pub struct Scene {
    raw: Dataset,
    prepared: Dataset,
    c: usize,
}

impl Scene {
    pub fn new(
        c: usize,
        per_cluster: usize,
        separation: f64,
        seed: u64,
    ) -> restartsc::Result<Self> {
        let raw = make_blobs(c, per_cluster, 2, separation, seed)?;
        let prepared = normalize_rows(&raw)?;
        Ok(Self { raw, prepared, c })
    }

    fn kernel(&self, tau: f64, landmark_fraction: f64, rank: usize, seed: u64) -> KernelParams {
        KernelParams {
            tau: if tau > 0.0 {
                TauPolicy::Fixed(tau)
            } else {
                TauPolicy::Median
            },
            landmarks: SizePolicy::Fraction(landmark_fraction),
            rank: SizePolicy::Absolute(rank),
            seed,
            ..KernelParams::default()
        }
    }

    fn init(&self, init: &str, seed: u64) -> restartsc::Result<Init> {
        Ok(match init {
            "kmeans" => Init::Given(kmeans_dataset(
                &self.prepared,
                self.c,
                &KmeansParams::default(),
                seed,
            )?),
            "truth" => Init::Given(Partition::from_labels(
                self.prepared.labels().expect("blobs are labeled"),
            )),
            _ => Init::Random(seed),
        })
    }

    /// Runs `algorithm` ("alg1" or "alg2") and records the partition after
    /// every cycle. A nonpositive `tau` selects the median heuristic.
    #[allow(clippy::too_many_arguments)]
    pub fn trace(
        &self,
        algorithm: &str,
        init: &str,
        tau: f64,
        landmark_fraction: f64,
        rank: usize,
        itermax: usize,
        lambda: f64,
        seed: u64,
    ) -> restartsc::Result<Trace> {
        let kernel = self.kernel(tau, landmark_fraction, rank, seed);
        let init = self.init(init, seed)?;
        let initial = init.resolve(&self.prepared, self.c)?.assign().to_vec();
        let mut cycles = Vec::new();
        let (converged, tau) = if algorithm == "alg2" {
            let params = Alg2Params {
                kernel,
                itermax,
                lambda,
                ..Alg2Params::default()
            };
            let st = run_algorithm2_with(&self.prepared, self.c, &init, &params, |rec, p| {
                cycles.push(Cycle {
                    cycle: rec.cycle,
                    assign: p.assign().to_vec(),
                    score: Some(rec.f),
                    metrics: rec.metrics,
                })
            })?;
            (st.converged, st.tau)
        } else {
            let params = Alg1Params {
                kernel,
                itermax,
                seed,
                ..Alg1Params::default()
            };
            let st = run_algorithm1_with(&self.prepared, self.c, &init, &params, |rec, p| {
                cycles.push(Cycle {
                    cycle: rec.cycle,
                    assign: p.assign().to_vec(),
                    score: rec.subspace_distance,
                    metrics: rec.metrics,
                })
            })?;
            (st.converged, st.tau)
        };
        Ok(Trace {
            initial,
            cycles,
            converged,
            tau,
        })
    }

    /// Bound check on the ground-truth blocks.
    pub fn spectrum(
        &self,
        tau: f64,
        landmark_fraction: f64,
        rank: usize,
        seed: u64,
    ) -> restartsc::Result<Spectrum> {
        let kernel = self.kernel(tau, landmark_fraction, rank, seed);
        let tau = kernel.resolve_tau(&self.prepared);
        let truth = Partition::from_labels(self.prepared.labels().expect("blobs are labeled"));
        let report = analyze(&self.prepared, &truth, tau, &kernel, 0)?;
        Ok(Spectrum {
            block_sizes: truth.sizes(),
            report,
        })
    }

    /// Raw coordinates, row-major `n x 2`.
    pub fn points(&self) -> &[f64] {
        self.raw.samples()
    }

    pub fn labels(&self) -> &[usize] {
        self.raw.labels().expect("blobs are labeled")
    }
}

fn js_err(e: restartsc::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json(v: &impl Serialize) -> String {
    serde_json::to_string(v).expect("demo output serializes")
}

#[wasm_bindgen]
pub struct Demo {
    scene: Scene,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(c: usize, per_cluster: usize, separation: f64, seed: u64) -> Result<Demo, JsError> {
        Ok(Demo {
            scene: Scene::new(c, per_cluster, separation, seed).map_err(js_err)?,
        })
    }

    pub fn points(&self) -> Vec<f64> {
        self.scene.points().to_vec()
    }

    pub fn labels(&self) -> Vec<u32> {
        self.scene.labels().iter().map(|&l| l as u32).collect()
    }

    /// JSON [`Trace`].
    #[allow(clippy::too_many_arguments)]
    pub fn run(
        &self,
        algorithm: &str,
        init: &str,
        tau: f64,
        landmark_fraction: f64,
        rank: usize,
        itermax: usize,
        lambda: f64,
        seed: u64,
    ) -> Result<String, JsError> {
        self.scene
            .trace(
                algorithm,
                init,
                tau,
                landmark_fraction,
                rank,
                itermax,
                lambda,
                seed,
            )
            .map(|t| to_json(&t))
            .map_err(js_err)
    }

    /// JSON [`Spectrum`].
    pub fn spectrum(
        &self,
        tau: f64,
        landmark_fraction: f64,
        rank: usize,
        seed: u64,
    ) -> Result<String, JsError> {
        self.scene
            .spectrum(tau, landmark_fraction, rank, seed)
            .map(|s| to_json(&s))
            .map_err(js_err)
    }
}
