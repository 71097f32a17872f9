//! Parallel replica loop with an order-independent reduction.
//!
//! Replicas are cut into fixed chunks that do not depend on the worker
//! count. Each chunk is accumulated sequentially and the chunk results are
//! merged in chunk order, so the merged sums are bit-identical for any pool size.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::accumulator::{EnsembleAccumulator, Record, DEFAULT_BATCHES};
use super::observables::{Probe, Registry};
use crate::error::{Error, Result};
use crate::rescale::{SimParams, Simulator};
use crate::rng::RngStream;

pub const CHUNK: u64 = 8;
pub const MIN_REPLICAS: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub n_replicas: u64,
    pub seed: u64,
    #[serde(default = "default_batches")]
    pub n_batches: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_batches() -> usize {
    DEFAULT_BATCHES
}

fn default_workers() -> usize {
    1
}

impl EnsembleSpec {
    pub fn new(n_replicas: u64, seed: u64) -> Self {
        Self { n_replicas, seed, n_batches: DEFAULT_BATCHES, workers: default_workers() }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }
}

/// An empty accumulator laid out for `probe`.
pub fn accumulator_for(probe: &Probe, n_batches: usize) -> Result<EnsembleAccumulator> {
    let reg = probe.registry();
    EnsembleAccumulator::with_kernel(reg.names(), reg.pairs.clone(), n_batches, reg.kernel_source, probe.n_coeffs())
}

/// Runs replicas `range` with streams `(seed, replica)`.
pub fn run_replicas(
    params: &SimParams,
    probe: &Probe,
    spec: &EnsembleSpec,
    range: std::ops::Range<u64>,
) -> Result<EnsembleAccumulator> {
    let base = Simulator::new(params.clone())?;
    let template = accumulator_for(probe, spec.n_batches)?;
    run_chunked(&template, spec, range, base, |sim, rng| probe.evaluate(sim, rng))
}

/// The generic replica loop: `eval` maps one stream to one record, with a
/// per-worker scratch state cloned from `init`.
pub fn run_chunked<S, F>(
    template: &EnsembleAccumulator,
    spec: &EnsembleSpec,
    range: std::ops::Range<u64>,
    init: S,
    eval: F,
) -> Result<EnsembleAccumulator>
where
    S: Clone + Send + Sync,
    F: Fn(&mut S, &mut RngStream) -> Result<Record> + Sync,
{
    if spec.workers == 0 {
        return Err(Error::InvalidParam("worker count must be positive".into()));
    }
    let chunks: Vec<std::ops::Range<u64>> = (range.start..range.end)
        .step_by(CHUNK as usize)
        .map(|s| s..(s + CHUNK).min(range.end))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::InvalidParam(format!("cannot build worker pool: {e}")))?;
    let partials: Vec<Result<EnsembleAccumulator>> = pool.install(|| {
        chunks
            .par_iter()
            .map_init(
                || init.clone(),
                |state, chunk| {
                    let mut acc = template.empty_like();
                    for r in chunk.clone() {
                        let mut rng = RngStream::new(spec.seed, r);
                        let rec = eval(state, &mut rng).map_err(|e| Error::Replica {
                            replica: r,
                            seed: spec.seed,
                            source: Box::new(e),
                        })?;
                        acc.push(r, &rec)?;
                    }
                    Ok(acc)
                },
            )
            .collect()
    });
    let mut total = template.empty_like();
    for p in partials {
        total.merge(&p?)?;
    }
    Ok(total)
}

pub fn ensemble_run(params: &SimParams, registry: Registry, spec: &EnsembleSpec) -> Result<EnsembleAccumulator> {
    if spec.n_replicas < MIN_REPLICAS {
        return Err(Error::InvalidParam(format!("an ensemble needs at least {MIN_REPLICAS} replicas")));
    }
    let probe = Probe::new(params, registry)?;
    run_replicas(params, &probe, spec, 0..spec.n_replicas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::propagate::StepScheme;
    use crate::rescale::{TestFunctionKind, TestFunctionSpec};
    use crate::stats::observables::Observable;

    fn setup(lambda: f64) -> (SimParams, Registry) {
        let grid = GridSpec::new(3, 8, 4.0).unwrap();
        let p = SimParams::new(lambda, 1.0, grid, 1.0, StepScheme::new(0.05), vec![0.1]).unwrap().with_s_max(1);
        let phi = TestFunctionSpec { kind: TestFunctionKind::GaussianBump, center: vec![0.0; 3], width: 0.8 };
        let mut reg = Registry::new(phi, vec![]);
        reg.add_pair(Observable::Pairing { t: 0.1 }, Observable::FreePairing { t: 0.1 });
        reg.add(Observable::SpatialAverage { s: 1 });
        (p, reg)
    }

    #[test]
    fn rejects_small_ensembles() {
        let (p, reg) = setup(1.0);
        assert!(ensemble_run(&p, reg, &EnsembleSpec::new(16, 1)).is_err());
    }

    #[test]
    fn same_seed_same_accumulator() {
        let (p, reg) = setup(1.0);
        let a = ensemble_run(&p, reg.clone(), &EnsembleSpec::new(40, 3)).unwrap();
        let b = ensemble_run(&p, reg, &EnsembleSpec::new(40, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn worker_count_does_not_change_sums() {
        let (p, reg) = setup(2.0);
        let a = ensemble_run(&p, reg.clone(), &EnsembleSpec::new(48, 5)).unwrap();
        let b = ensemble_run(&p, reg, &EnsembleSpec::new(48, 5).with_workers(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn halves_merge_into_the_whole() {
        let (p, reg) = setup(1.0);
        let spec = EnsembleSpec::new(64, 9);
        let probe = Probe::new(&p, reg).unwrap();
        let full = run_replicas(&p, &probe, &spec, 0..64).unwrap();
        let mut half = run_replicas(&p, &probe, &spec, 0..32).unwrap();
        half.merge(&run_replicas(&p, &probe, &spec, 32..64).unwrap()).unwrap();
        let (x, y) = (full.estimate(|m| m.variance(0)), half.estimate(|m| m.variance(0)));
        assert!((x.value - y.value).abs() <= 1e-12 * x.value.abs());
        assert_eq!(full.count(), 64);
    }
}
