//! Declarative experiment files: strict TOML with a default for every field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::propagate::StepScheme;
use crate::rescale::{SimParams, TestFunctionKind, TestFunctionSpec};
use crate::stats::accumulator::DEFAULT_BATCHES;
use crate::stats::ensemble::EnsembleSpec;

/// Environment variable that overrides the configured worker count.
pub const WORKERS_ENV: &str = "ACNOISE_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub name: String,
    pub out: PathBuf,
    pub suites: Vec<String>,
    pub sim: SimBlock,
    pub phi: PhiBlock,
    pub ensemble: EnsembleBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            out: PathBuf::from("results"),
            suites: Vec::new(),
            sim: SimBlock::default(),
            phi: PhiBlock::default(),
            ensemble: EnsembleBlock::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimBlock {
    pub d: usize,
    pub n: usize,
    pub side: f64,
    pub base_width: f64,
    /// Coupling ladder; a single entry for one run.
    pub lambda: Vec<f64>,
    pub eps: Vec<f64>,
    pub dt: f64,
    pub t_list: Vec<f64>,
    /// Microscopic snapshot indices `s` for the spatial-average statistic.
    pub s_ladder: Vec<usize>,
}

impl Default for SimBlock {
    fn default() -> Self {
        Self {
            d: 3,
            n: 32,
            side: 4.0,
            base_width: 2.5,
            lambda: vec![1.0],
            eps: vec![0.1],
            dt: 0.02,
            t_list: vec![0.25, 0.5, 1.0],
            s_ladder: vec![16],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhiBlock {
    pub kind: TestFunctionKind,
    pub width: f64,
    /// Defaults to the centre of the torus.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
}

impl Default for PhiBlock {
    fn default() -> Self {
        Self { kind: TestFunctionKind::GaussianBump, width: 0.5, center: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleBlock {
    pub n_replicas: u64,
    pub seed: u64,
    pub n_batches: usize,
    pub workers: usize,
}

impl Default for EnsembleBlock {
    fn default() -> Self {
        Self { n_replicas: 1024, seed: 1, n_batches: DEFAULT_BATCHES, workers: 1 }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        self.validate()?;
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sim;
        if s.lambda.is_empty() || s.eps.is_empty() {
            return Err(Error::Config("lambda and eps ladders must be non-empty".into()));
        }
        if self.ensemble.n_batches == 0 {
            return Err(Error::Config("n_batches must be positive".into()));
        }
        if self.ensemble.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        // TOML integers are signed.
        if self.ensemble.seed > i64::MAX as u64 || self.ensemble.n_replicas > i64::MAX as u64 {
            return Err(Error::Config(format!("seed and n_replicas must not exceed {}", i64::MAX)));
        }
        let grid = self.grid()?;
        self.phi_spec().build(&grid)?;
        for &lambda in &s.lambda {
            for &eps in &s.eps {
                self.params(lambda, eps)?;
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.sim.d, self.sim.n, self.sim.side)
    }

    pub fn s_max(&self) -> usize {
        self.sim.s_ladder.iter().copied().max().unwrap_or(0)
    }

    pub fn params(&self, lambda: f64, eps: f64) -> Result<SimParams> {
        let s = &self.sim;
        Ok(SimParams::new(lambda, eps, self.grid()?, s.base_width, StepScheme::new(s.dt), s.t_list.clone())?
            .with_s_max(self.s_max()))
    }

    pub fn phi_spec(&self) -> TestFunctionSpec {
        let center = self.phi.center.clone().unwrap_or_else(|| vec![0.5 * self.sim.side; self.sim.d]);
        TestFunctionSpec { kind: self.phi.kind, center, width: self.phi.width }
    }

    /// Worker count after the environment override.
    pub fn workers(&self) -> Result<usize> {
        match std::env::var(WORKERS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(Error::Config(format!("{WORKERS_ENV}=`{v}` is not a positive integer"))),
            },
            Err(_) => Ok(self.ensemble.workers),
        }
    }

    pub fn ensemble_spec(&self) -> Result<EnsembleSpec> {
        let e = &self.ensemble;
        Ok(EnsembleSpec { n_replicas: e.n_replicas, seed: e.seed, n_batches: e.n_batches, workers: self.workers()? })
    }

    /// Warnings for parameter choices that are legal but let wrap-around
    /// or a coarse lattice leak into the statistics.
    pub fn warnings(&self) -> Vec<String> {
        let s = &self.sim;
        let t_max = s.t_list.iter().copied().fold(0.0f64, f64::max);
        let width = s.eps.iter().copied().fold(0.0f64, f64::max) * s.base_width;
        let need = 8.0 * (width + (2.0 * t_max).sqrt());
        let mut out = Vec::new();
        if s.side < need {
            out.push(format!(
                "torus side {} is below 8 (width + sqrt(2 t_max)) = {need:.3}; heat kernels wrap around",
                s.side
            ));
        }
        out
    }
}
