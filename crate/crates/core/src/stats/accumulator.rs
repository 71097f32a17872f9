//! Mergeable ensemble sums with batch-means error bars.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_POWER: usize = 8;
pub const DEFAULT_BATCHES: usize = 32;
/// Error bars need at least this many non-empty batches.
pub const MIN_BATCHES_FOR_SE: usize = 16;

/// A point estimate with its batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: Option<f64>,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, se: Some(0.0) }
    }

    pub fn se_or_nan(&self) -> f64 {
        self.se.unwrap_or(f64::NAN)
    }

    /// `(value - target) / se`; `None` without an error bar. A zero error bar
    /// gives `0` on an exact hit and `±inf` otherwise.
    pub fn z(&self, target: f64) -> Option<f64> {
        let se = self.se?;
        let diff = self.value - target;
        Some(if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY })
    }

    pub fn within(&self, target: f64, z: f64) -> bool {
        self.z(target).is_some_and(|v| v.abs() <= z)
    }
}

/// One replica's contribution: scalar observables plus optional projections
/// of its noise onto the first-chaos basis.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Record {
    pub values: Vec<f64>,
    pub noise_coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub count: u64,
    /// `powers[i][k]` is the sum of `x_i^(k+1)`.
    pub powers: Vec<[f64; MAX_POWER]>,
    pub cross: Vec<f64>,
    /// Sums of `F * xi_j` and `(F * xi_j)^2` for the kernel source `F`.
    pub kernel_sum: Vec<f64>,
    pub kernel_sq: Vec<f64>,
}

impl Batch {
    fn empty(n_obs: usize, n_pairs: usize, n_coeffs: usize) -> Self {
        Self {
            count: 0,
            powers: vec![[0.0; MAX_POWER]; n_obs],
            cross: vec![0.0; n_pairs],
            kernel_sum: vec![0.0; n_coeffs],
            kernel_sq: vec![0.0; n_coeffs],
        }
    }

    fn absorb(&mut self, other: &Batch) {
        self.count += other.count;
        for (a, b) in self.powers.iter_mut().zip(&other.powers) {
            for k in 0..MAX_POWER {
                a[k] += b[k];
            }
        }
        add_into(&mut self.cross, &other.cross);
        add_into(&mut self.kernel_sum, &other.kernel_sum);
        add_into(&mut self.kernel_sq, &other.kernel_sq);
    }
}

fn add_into(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleAccumulator {
    names: Vec<String>,
    pairs: Vec<(usize, usize)>,
    /// Observable whose first-chaos kernel is tracked, if any.
    kernel_source: Option<usize>,
    n_coeffs: usize,
    batches: Vec<Batch>,
}

impl EnsembleAccumulator {
    pub fn new(names: Vec<String>, pairs: Vec<(usize, usize)>, n_batches: usize) -> Result<Self> {
        Self::with_kernel(names, pairs, n_batches, None, 0)
    }

    pub fn with_kernel(
        names: Vec<String>,
        pairs: Vec<(usize, usize)>,
        n_batches: usize,
        kernel_source: Option<usize>,
        n_coeffs: usize,
    ) -> Result<Self> {
        if n_batches == 0 {
            return Err(Error::InvalidParam("need at least one batch".into()));
        }
        let n = names.len();
        if pairs.iter().any(|&(i, j)| i >= n || j >= n) || kernel_source.is_some_and(|s| s >= n) {
            return Err(Error::InvalidParam("pair or kernel source refers to an unknown observable".into()));
        }
        let n_coeffs = if kernel_source.is_some() { n_coeffs } else { 0 };
        let batches = vec![Batch::empty(n, pairs.len(), n_coeffs); n_batches];
        Ok(Self { names, pairs, kernel_source, n_coeffs, batches })
    }

    /// A fresh accumulator with the same layout.
    pub fn empty_like(&self) -> Self {
        let mut out = self.clone();
        let b = Batch::empty(self.names.len(), self.pairs.len(), self.n_coeffs);
        out.batches.iter_mut().for_each(|x| *x = b.clone());
        out
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::MissingSnapshot(name.to_string()))
    }

    pub fn kernel_source(&self) -> Option<usize> {
        self.kernel_source
    }

    pub fn n_batches(&self) -> usize {
        self.batches.len()
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    pub fn count(&self) -> u64 {
        self.batches.iter().map(|b| b.count).sum()
    }

    /// Adds one replica; replica `r` always lands in batch `r mod B`.
    pub fn push(&mut self, replica: u64, record: &Record) -> Result<()> {
        if record.values.len() != self.names.len() || record.noise_coeffs.len() != self.n_coeffs {
            return Err(Error::InvalidParam("record does not match the accumulator layout".into()));
        }
        let nb = self.batches.len() as u64;
        let b = &mut self.batches[(replica % nb) as usize];
        b.count += 1;
        for (acc, &x) in b.powers.iter_mut().zip(&record.values) {
            let mut p = x;
            for slot in acc.iter_mut() {
                *slot += p;
                p *= x;
            }
        }
        for (acc, &(i, j)) in b.cross.iter_mut().zip(&self.pairs) {
            *acc += record.values[i] * record.values[j];
        }
        if let Some(src) = self.kernel_source {
            let f = record.values[src];
            for ((s, q), &c) in b.kernel_sum.iter_mut().zip(b.kernel_sq.iter_mut()).zip(&record.noise_coeffs) {
                let z = f * c;
                *s += z;
                *q += z * z;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.names != other.names
            || self.pairs != other.pairs
            || self.kernel_source != other.kernel_source
            || self.n_coeffs != other.n_coeffs
            || self.batches.len() != other.batches.len()
        {
            return Err(Error::InvalidParam("cannot merge accumulators with different layouts".into()));
        }
        for (a, b) in self.batches.iter_mut().zip(&other.batches) {
            a.absorb(b);
        }
        Ok(())
    }

    fn total(&self) -> Batch {
        let mut t = Batch::empty(self.names.len(), self.pairs.len(), self.n_coeffs);
        for b in &self.batches {
            t.absorb(b);
        }
        t
    }

    /// Pooled samples with one non-empty batch left out, built from prefix
    /// and suffix sums so no subtraction is involved.
    fn leave_one_out(&self) -> Vec<Batch> {
        let empty = Batch::empty(self.names.len(), self.pairs.len(), self.n_coeffs);
        let b = self.batches.len();
        let mut suffix = vec![empty.clone(); b + 1];
        for i in (0..b).rev() {
            let mut s = suffix[i + 1].clone();
            s.absorb(&self.batches[i]);
            suffix[i] = s;
        }
        let mut prefix = empty;
        let mut out = Vec::new();
        for i in 0..b {
            if self.batches[i].count > 0 {
                let mut rest = prefix.clone();
                rest.absorb(&suffix[i + 1]);
                out.push(rest);
            }
            prefix.absorb(&self.batches[i]);
        }
        out
    }

    /// Evaluates `stat` on the pooled sample. The error bar is the
    /// delete-one-batch jackknife, which equals the batch-means error for
    /// linear statistics and stays honest for high standardized moments.
    pub fn estimate(&self, stat: impl Fn(&Moments) -> f64) -> Estimate {
        let total = self.total();
        let value = stat(&Moments { acc: self, batch: &total });
        let loo: Vec<f64> = self.leave_one_out().iter().map(|b| stat(&Moments { acc: self, batch: b })).collect();
        Estimate { value, se: jackknife_se(&loo) }
    }

    /// Pooled sample means `E[F xi_j]` of the kernel source.
    pub fn kernel_coefficients(&self) -> Vec<f64> {
        let total = self.total();
        Moments { acc: self, batch: &total }.kernel_coefficients()
    }

    /// Like [`estimate`](Self::estimate) for statistics that compare two
    /// ensembles run on the same seeds, so batch `b` of each holds the same
    /// replicas and the batch-wise difference cancels common noise.
    pub fn paired_estimate(&self, other: &Self, stat: impl Fn(&Moments, &Moments) -> f64) -> Result<Estimate> {
        if self.batches.len() != other.batches.len() {
            return Err(Error::InvalidParam("paired ensembles need the same batch layout".into()));
        }
        let (ta, tb) = (self.total(), other.total());
        let value = stat(&Moments { acc: self, batch: &ta }, &Moments { acc: other, batch: &tb });
        for (a, b) in self.batches.iter().zip(&other.batches) {
            if a.count != b.count {
                return Err(Error::InvalidParam("paired batches hold different replica counts".into()));
            }
        }
        let loo: Vec<f64> = self
            .leave_one_out()
            .iter()
            .zip(&other.leave_one_out())
            .map(|(a, b)| stat(&Moments { acc: self, batch: a }, &Moments { acc: other, batch: b }))
            .collect();
        Ok(Estimate { value, se: jackknife_se(&loo) })
    }
}

fn jackknife_se(values: &[f64]) -> Option<f64> {
    let b = values.len();
    if b < MIN_BATCHES_FOR_SE {
        return None;
    }
    let mean = values.iter().sum::<f64>() / b as f64;
    let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    Some((ss * (b - 1) as f64 / b as f64).sqrt())
}

/// Read-only moment view of a pooled sample or of a single batch.
pub struct Moments<'a> {
    acc: &'a EnsembleAccumulator,
    batch: &'a Batch,
}

impl Moments<'_> {
    pub fn count(&self) -> f64 {
        self.batch.count as f64
    }

    /// `E[x_i^k]` for `1 <= k <= 8`.
    pub fn raw(&self, i: usize, k: usize) -> f64 {
        assert!((1..=MAX_POWER).contains(&k));
        self.batch.powers[i][k - 1] / self.count()
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.raw(i, 1)
    }

    /// Biased central moment `E[(x - mean)^k]` from the power sums.
    pub fn central(&self, i: usize, k: usize) -> f64 {
        let m = self.mean(i);
        let mut acc = 0.0;
        let mut binom = 1.0;
        for j in 0..=k {
            let raw = if j == 0 { 1.0 } else { self.raw(i, j) };
            acc += binom * raw * (-m).powi((k - j) as i32);
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
        acc
    }

    /// Unbiased sample variance.
    pub fn variance(&self, i: usize) -> f64 {
        let n = self.count();
        self.central(i, 2) * n / (n - 1.0)
    }

    /// `E[(x - mean)^k] / sd^k`.
    pub fn standardized(&self, i: usize, k: usize) -> f64 {
        self.central(i, k) / self.central(i, 2).powf(k as f64 / 2.0)
    }

    /// `E[x_i x_j]`; the pair must be registered unless `i == j`.
    pub fn raw_cross(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.raw(i, 2);
        }
        let slot = self
            .acc
            .pairs
            .iter()
            .position(|&p| p == (i, j) || p == (j, i))
            .unwrap_or_else(|| panic!("pair ({i}, {j}) is not registered"));
        self.batch.cross[slot] / self.count()
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        let n = self.count();
        (self.raw_cross(i, j) - self.mean(i) * self.mean(j)) * n / (n - 1.0)
    }

    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        self.covariance(i, j) / (self.variance(i) * self.variance(j)).sqrt()
    }

    /// Unbiased estimate of `sum_j E[F xi_j]^2`: the squared sample mean
    /// carries a noise floor of `Var/N` per coefficient, which the
    /// `(S^2 - Q) / (N (N - 1))` form removes.
    pub fn kernel_energy(&self) -> f64 {
        let n = self.count();
        self.batch
            .kernel_sum
            .iter()
            .zip(&self.batch.kernel_sq)
            .map(|(s, q)| (s * s - q) / (n * (n - 1.0)))
            .sum()
    }

    /// Sample means `E[F xi_j]`.
    pub fn kernel_coefficients(&self) -> Vec<f64> {
        let n = self.count();
        self.batch.kernel_sum.iter().map(|s| s / n).collect()
    }
}
