use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use restartsc::kernel::{SizePolicy, TauPolicy};
use restartsc::runner::{Algorithm, DataSpec, InitSpec, RunConfig};

use crate::args::{AlgorithmArg, InitArg, Overrides};
use crate::failure::Failure;

/// Config hash and seed carried by every report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Self {
        Self {
            config_hash: hash(cfg),
            seed: cfg.seed,
        }
    }
}

/// First 16 hex digits of the SHA-256 of the config's canonical JSON.
pub fn hash<T: Serialize>(cfg: &T) -> String {
    let json = serde_json::to_vec(cfg).expect("configs serialize");
    Sha256::digest(&json)[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Validation(format!("config: cannot read {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| Failure::Validation(format!("config {}: {e}", path.display())))
}

/// Loads `path` if given, applies `ov`, and validates.
pub fn load_run_config(path: Option<&Path>, ov: &Overrides) -> Result<RunConfig, Failure> {
    let mut cfg = match path {
        Some(p) => read_toml(p)?,
        None => {
            let dataset = dataset_override(ov).ok_or_else(|| {
                Failure::Validation(
                    "dataset: no --config given and no --data or --libsvm path".into(),
                )
            })?;
            RunConfig::new(dataset, Algorithm::Alg1)
        }
    };
    apply(&mut cfg, ov)?;
    cfg.validate()
        .map_err(|e| Failure::from_core("config", e))?;
    Ok(cfg)
}

fn dataset_override(ov: &Overrides) -> Option<DataSpec> {
    if let Some(path) = &ov.data {
        return Some(DataSpec::Csv {
            path: path.clone(),
            label_column: ov.label_column,
        });
    }
    ov.libsvm
        .as_ref()
        .map(|path| DataSpec::Libsvm { path: path.clone() })
}

pub fn apply(cfg: &mut RunConfig, ov: &Overrides) -> Result<(), Failure> {
    if let Some(d) = dataset_override(ov) {
        cfg.dataset = d;
    }
    if let Some(a) = ov.algorithm {
        cfg.algorithm = match a {
            AlgorithmArg::Alg1 => Algorithm::Alg1,
            AlgorithmArg::Alg2 => Algorithm::Alg2,
            AlgorithmArg::Kmeans => Algorithm::Kmeans,
        };
    }
    if let Some(c) = ov.c {
        cfg.c = Some(c);
    }
    if let Some(i) = ov.init {
        cfg.init = match i {
            InitArg::Random => InitSpec::Random,
            InitArg::Kmeans => InitSpec::Kmeans,
        };
    }
    if let Some(p) = &ov.init_file {
        cfg.init = InitSpec::File(p.clone());
    }
    if let Some(t) = &ov.tau {
        cfg.kernel.tau = parse_tau(t)?;
    }
    if let Some(s) = &ov.landmarks {
        cfg.kernel.landmarks = parse_size("landmarks", s)?;
    }
    if let Some(s) = &ov.rank {
        cfg.kernel.rank = parse_size("rank", s)?;
    }
    if let Some(v) = ov.itermax {
        cfg.itermax = v;
    }
    if let Some(v) = ov.tol {
        cfg.tol = v;
    }
    if let Some(v) = ov.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = ov.seed {
        cfg.seed = v;
    }
    Ok(())
}

fn parse_tau(s: &str) -> Result<TauPolicy, Failure> {
    if s.eq_ignore_ascii_case("median") {
        return Ok(TauPolicy::Median);
    }
    s.parse::<f64>()
        .map(TauPolicy::Fixed)
        .map_err(|_| Failure::Validation(format!("tau: expected a number or `median`, got `{s}`")))
}

fn parse_size(field: &str, s: &str) -> Result<SizePolicy, Failure> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(SizePolicy::Auto);
    }
    if let Ok(k) = s.parse::<usize>() {
        return Ok(SizePolicy::Absolute(k));
    }
    match s.parse::<f64>() {
        Ok(f) => Ok(SizePolicy::Fraction(f)),
        Err(_) => Err(Failure::Validation(format!(
            "{field}: expected an integer, a fraction, or `auto`, got `{s}`"
        ))),
    }
}
