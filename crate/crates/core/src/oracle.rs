//! Known-answer CLT checks on synthetic short-range fields, the pairing
//! count behind the Gaussian moments, and the single-site ODE-layer predictor.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{inner_product, GridSpec, ScalarField};
use crate::mollifier::{InitialLaw, MollifierSpec};
use crate::propagate::cubic_flow_value;
use crate::rescale::TestFunction;
use crate::rng::RngStream;
use crate::spectral::Spectral;
use crate::stats::accumulator::{EnsembleAccumulator, Estimate, Record};
use crate::stats::ensemble::{run_chunked, EnsembleSpec, MIN_REPLICAS};
use crate::stats::report::{Check, Rule};

pub const MAX_PAIRING_K: u32 = 12;
pub const MAX_MOMENT_K: usize = 4;
const PANEL_NODES: usize = 16;
const PREDICTOR_TOL: f64 = 1e-10;
const PREDICTOR_MAX_HALVINGS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingTable {
    pub k: u32,
    pub count: u64,
}

/// Number of perfect pairings of `2k` elements, `(2k-1)!!`.
pub fn pairing_count(k: u32) -> Result<u64> {
    if k == 0 {
        return Err(Error::InvalidParam("pairing count needs k >= 1".into()));
    }
    if k > MAX_PAIRING_K {
        return Err(Error::Overflow(k));
    }
    Ok((1..=k as u64).map(|j| 2 * j - 1).product())
}

pub fn pairing_table(k_max: u32) -> Result<Vec<PairingTable>> {
    (1..=k_max).map(|k| Ok(PairingTable { k, count: pairing_count(k)? })).collect()
}

/// `(m-1)!!` for even `m`, zero for odd `m`: the `m`-th moment of a standard normal.
pub fn gaussian_moment(m: usize) -> f64 {
    if m % 2 == 1 {
        0.0
    } else {
        (1..m).step_by(2).map(|j| j as f64).product()
    }
}

/// Odd pointwise maps applied to the smoothed noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// `u / sqrt(1 + 2 lambda u^2)`.
    OdeFlow { lambda: f64 },
    /// `u exp(-lambda u^2)`.
    CubicDamped { lambda: f64 },
}

impl Transform {
    pub fn apply(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => u,
            Transform::OdeFlow { lambda } => cubic_flow_value(u, lambda, 1.0),
            Transform::CubicDamped { lambda } => u * (-lambda * u * u).exp(),
        }
    }
}

/// `eta_eps(x) = scale * eps^{-d/2} T(eps^{d/2} (rho_eps * xi)(x))` with `rho_eps`
/// of width `eps * base_width`. Covariances of `eta_eps` are those of `eta_1`
/// rescaled, so the integrated covariance does not depend on `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticFieldSpec {
    pub grid: GridSpec,
    pub base_width: f64,
    pub transform: Transform,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl SyntheticFieldSpec {
    pub fn new(grid: GridSpec, base_width: f64, transform: Transform) -> Self {
        Self { grid, base_width, transform, scale: 1.0 }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_transform(mut self, transform: Transform) -> Self {
        self.transform = transform;
        self
    }

    /// The integrated covariance when it is known in closed form.
    pub fn known_sigma_sq(&self) -> Option<f64> {
        match self.transform {
            Transform::Identity => Some(self.scale * self.scale),
            _ => None,
        }
    }

    pub fn sampler(&self, eps: f64) -> Result<SyntheticField> {
        if !(eps.is_finite() && eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidParam(format!("eps = {eps} must lie in (0, 1]")));
        }
        if !self.scale.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        let law = InitialLaw::new(self.grid, MollifierSpec::bump(eps * self.base_width))?;
        let amp = eps.powf(self.grid.dim() as f64 / 2.0);
        Ok(SyntheticField { spec: self.clone(), amp, law, ws: Spectral::new(self.grid) })
    }
}

/// Sampler for one `eps`; clone it per worker.
#[derive(Debug, Clone)]
pub struct SyntheticField {
    spec: SyntheticFieldSpec,
    amp: f64,
    law: InitialLaw,
    ws: Spectral,
}

impl SyntheticField {
    pub fn sample(&mut self, rng: &mut RngStream) -> Result<ScalarField> {
        let (_, g) = self.law.sample(&mut self.ws, rng)?;
        let (amp, scale, t) = (self.amp, self.spec.scale, self.spec.transform);
        Ok(g.map(|u| scale * t.apply(amp * u) / amp))
    }
}

/// `L^{-d/2} h^d sum eta`, whose variance is the integrated covariance up to torus wrap-around.
pub fn spatial_average(f: &ScalarField) -> f64 {
    f.integral() / f.grid().volume().sqrt()
}

fn ensemble_for(
    spec: &SyntheticFieldSpec,
    eps: f64,
    phi: Option<&TestFunction>,
    ens: &EnsembleSpec,
) -> Result<EnsembleAccumulator> {
    if ens.n_replicas < MIN_REPLICAS {
        return Err(Error::InvalidParam(format!("an ensemble needs at least {MIN_REPLICAS} replicas")));
    }
    let mut names = vec!["spatial_average".to_string()];
    if phi.is_some() {
        names.push("pairing".to_string());
    }
    let template = EnsembleAccumulator::new(names, vec![], ens.n_batches)?;
    let field = spec.sampler(eps)?;
    run_chunked(&template, ens, 0..ens.n_replicas, field, |field, rng| {
        let eta = field.sample(rng)?;
        let mut values = vec![spatial_average(&eta)];
        if let Some(phi) = phi {
            values.push(inner_product(&eta, phi.field())?);
        }
        Ok(Record { values, noise_coeffs: vec![] })
    })
}

/// Integrated covariance of `eta_eps` from the variance of its spatial average.
pub fn sigma_sq_field(spec: &SyntheticFieldSpec, eps: f64, ens: &EnsembleSpec) -> Result<Estimate> {
    let acc = ensemble_for(spec, eps, None, ens)?;
    Ok(acc.estimate(|m| m.variance(0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltRow {
    pub eps: f64,
    pub order: usize,
    /// `(order-1)!!` for even orders, zero for odd ones.
    pub target: f64,
    pub check: Check,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltTable {
    pub sigma_sq: Vec<(f64, Estimate)>,
    pub rows: Vec<CltRow>,
}

impl CltTable {
    pub fn rows_at(&self, eps: f64) -> impl Iterator<Item = &CltRow> {
        self.rows.iter().filter(move |r| r.eps == eps)
    }

    pub fn passes_at(&self, eps: f64) -> bool {
        let mut rows = self.rows_at(eps).peekable();
        rows.peek().is_some() && rows.all(|r| r.check.pass)
    }

    /// Largest `|z|` at each `eps`, in ladder order.
    pub fn worst_z(&self) -> Vec<(f64, f64)> {
        self.sigma_sq
            .iter()
            .map(|&(eps, _)| {
                let z = self.rows_at(eps).filter_map(|r| r.check.z).fold(0.0f64, |a, z| a.max(z.abs()));
                (eps, z)
            })
            .collect()
    }

    pub fn checks(&self) -> Vec<Check> {
        self.rows.iter().map(|r| r.check.clone()).collect()
    }
}

/// Standardized moments `E[<eta_eps, phi>^m] / (sigma^2 |phi|^2)^{m/2}` for
/// `m <= 2 k_max` against the Gaussian values, with `sigma^2` estimated from
/// the same ensemble.
pub fn clt_moment_test(
    spec: &SyntheticFieldSpec,
    phi: &TestFunction,
    eps_ladder: &[f64],
    k_max: usize,
    ens: &EnsembleSpec,
    z: f64,
) -> Result<CltTable> {
    if k_max == 0 || k_max > MAX_MOMENT_K {
        return Err(Error::InvalidParam(format!("k_max = {k_max} must lie in 1..={MAX_MOMENT_K}")));
    }
    if phi.field().grid() != &spec.grid {
        return Err(Error::GridMismatch);
    }
    let norm_sq = phi.norm_sq();
    let mut table = CltTable { sigma_sq: vec![], rows: vec![] };
    for &eps in eps_ladder {
        let acc = ensemble_for(spec, eps, Some(phi), ens)?;
        table.sigma_sq.push((eps, acc.estimate(|m| m.variance(0))));
        for order in 1..=2 * k_max {
            let target = gaussian_moment(order);
            let est = acc.estimate(|m| m.raw(1, order) / (m.variance(0) * norm_sq).powf(order as f64 / 2.0));
            let check = Check::new(format!("clt_moment@eps={eps},m={order}"), est, Rule::Near { target, z });
            table.rows.push(CltRow { eps, order, target, check });
        }
    }
    Ok(table)
}

fn legendre_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(PANEL_NODES).expect("positive node count")))
}

/// Covariance matrix of `(Z, Phi_lambda(Z))` for `Z ~ N(0, v0)` by composite
/// Gauss-Legendre on `[-12 sd, 12 sd]`. Panels start narrower than both the
/// standard deviation and the width `1/sqrt(2 lambda)` of the flow's kink and
/// halve until entries move by less than `1e-10` relative.
pub fn ode_layer_predictor(lambda: f64, v0: f64) -> Result<[[f64; 2]; 2]> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidParam(format!("lambda = {lambda} must be finite and non-negative")));
    }
    if !(v0.is_finite() && v0 > 0.0) {
        return Err(Error::InvalidParam(format!("v0 = {v0} must be positive")));
    }
    let sd = v0.sqrt();
    let reach = 12.0 * sd;
    let kink = if lambda > 0.0 { 1.0 / (2.0 * lambda).sqrt() } else { f64::INFINITY };
    let norm = 1.0 / (2.0 * std::f64::consts::PI * v0).sqrt();
    let rule = legendre_rule();
    let moments = |panels: usize| {
        let width = 2.0 * reach / panels as f64;
        let mut m = [0.0; 3];
        for p in 0..panels {
            let a = -reach + p as f64 * width;
            let e = |g: &dyn Fn(f64) -> f64| rule.integrate(a, a + width, |z| g(z) * norm * (-0.5 * z * z / v0).exp());
            let phi = |z: f64| cubic_flow_value(z, lambda, 1.0);
            m[0] += e(&|z| z * z);
            m[1] += e(&|z| z * phi(z));
            m[2] += e(&|z| phi(z) * phi(z));
        }
        m
    };
    let mut panels = (2.0 * reach / (0.5 * sd.min(kink))).ceil() as usize;
    let mut cur = moments(panels);
    for _ in 0..PREDICTOR_MAX_HALVINGS {
        panels *= 2;
        let next = moments(panels);
        let done = cur.iter().zip(&next).all(|(a, b)| (a - b).abs() <= PREDICTOR_TOL * b.abs().max(f64::MIN_POSITIVE));
        cur = next;
        if done {
            break;
        }
    }
    Ok([[cur[0], cur[1]], [cur[1], cur[2]]])
}

/// Blocks of the transitive closure of `|x_i - x_j| <= cutoff`, each sorted,
/// ordered by their smallest member.
pub fn cluster_partition(points: &[Vec<f64>], cutoff: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 <= cutoff * cutoff {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = root(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = blocks.len();
            blocks.push(vec![]);
        }
        blocks[slot[r]].push(i);
    }
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairing_counts() {
        assert_eq!(pairing_count(1).unwrap(), 1);
        assert_eq!(pairing_count(2).unwrap(), 3);
        assert_eq!(pairing_count(3).unwrap(), 15);
        assert_eq!(pairing_count(12).unwrap(), 316_234_143_225);
        assert!(matches!(pairing_count(13), Err(Error::Overflow(13))));
        assert!(pairing_count(0).is_err());
        for k in 1..=4u32 {
            assert_eq!(gaussian_moment(2 * k as usize), pairing_count(k).unwrap() as f64);
        }
        assert_eq!(pairing_table(3).unwrap().last().unwrap().count, 15);
    }

    #[test]
    fn transforms_are_odd() {
        for t in [Transform::Identity, Transform::OdeFlow { lambda: 2.0 }, Transform::CubicDamped { lambda: 0.3 }] {
            for u in [0.1, 0.7, 3.0] {
                assert_eq!(t.apply(-u), -t.apply(u));
            }
        }
    }

    #[test]
    fn predictor_at_zero_coupling_is_rank_one() {
        let m = ode_layer_predictor(0.0, 0.7).unwrap();
        for row in m {
            for v in row {
                assert!((v - 0.7).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn predictor_is_psd_and_vanishes_at_strong_coupling() {
        let mut prev = f64::INFINITY;
        for lambda in [0.1, 1.0, 10.0, 100.0, 1e4] {
            let m = ode_layer_predictor(lambda, 1.0).unwrap();
            assert_eq!(m[0][1], m[1][0]);
            assert!(m[0][0] * m[1][1] - m[0][1] * m[0][1] >= -1e-14);
            let c = m[0][1] / (m[0][0] * m[1][1]).sqrt();
            assert!(c > 0.0 && c < 1.0);
            assert!(m[1][1] < prev);
            prev = m[1][1];
        }
        assert!(prev < 1e-3);
        assert!(ode_layer_predictor(-1.0, 1.0).is_err());
        assert!(ode_layer_predictor(1.0, 0.0).is_err());
    }

    #[test]
    fn predictor_matches_monte_carlo() {
        let m = ode_layer_predictor(1.0, 1.0).unwrap();
        let mut rng = RngStream::new(17, 0);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let p = cubic_flow_value(rng.standard_normal(), 1.0, 1.0);
            s += p * p;
            s2 += p.powi(4);
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - m[1][1]).abs() < 3.0 * se, "{mean} vs {}", m[1][1]);
    }

    #[test]
    fn clusters() {
        let far: Vec<Vec<f64>> = (0..4).map(|i| vec![3.0 * i as f64, 0.0]).collect();
        assert_eq!(cluster_partition(&far, 1.0), vec![vec![0], vec![1], vec![2], vec![3]]);
        let chain = vec![vec![0.0], vec![0.9], vec![1.8]];
        assert_eq!(cluster_partition(&chain, 1.0), vec![vec![0, 1, 2]]);
        let pairs = vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.5, 0.0], vec![10.0, 0.5]];
        assert_eq!(cluster_partition(&pairs, 1.0), vec![vec![0, 2], vec![1, 3]]);
        assert!(cluster_partition(&[], 1.0).is_empty());
    }

    #[test]
    fn synthetic_field_is_deterministic_per_stream() {
        let grid = GridSpec::new(3, 16, 4.0).unwrap();
        let spec = SyntheticFieldSpec::new(grid, 1.0, Transform::OdeFlow { lambda: 1.0 });
        let mut f = spec.sampler(1.0).unwrap();
        let a = f.sample(&mut RngStream::new(1, 2)).unwrap();
        let b = f.sample(&mut RngStream::new(1, 2)).unwrap();
        assert_eq!(a.values(), b.values());
        assert!(spec.sampler(0.0).is_err());
    }
}
