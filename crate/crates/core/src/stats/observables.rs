//! Per-replica statistics extracted from one rescaled run.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::accumulator::Record;
use super::chaos::{FirstChaosBasis, WickPlan};
use crate::error::{Error, Result};
use crate::grid::{inner_product, ScalarField};
use crate::rescale::{SimParams, Simulator, TestFunction, TestFunctionSpec, Trajectory};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Observable {
    /// `<u(t), phi>`.
    Pairing { t: f64 },
    /// `<p_t * u(0), phi>`.
    FreePairing { t: f64 },
    /// Spatial mean of `u(t,x)^2`.
    SecondMoment { t: f64 },
    /// Spatial mean of `u(t,x) (p_t * u(0))(x)`.
    FreeCross { t: f64 },
    /// `L^{-d/2} h^d sum_x u(s eps^2, x)`.
    SpatialAverage { s: usize },
    /// Spatial mean of `u(t,x)^p`.
    PowerMean { t: f64, p: u32 },
    /// Spatial mean of `u(t,x)^p u(t, x + lag h e_1)^p`.
    LagProduct { t: f64, p: u32, lag: usize },
    /// `<W(t), phi>` for the Wick-cube statistic `W`.
    WickPairing { t: f64 },
    /// Spatial mean of `W(t,x)^2`.
    WickEnergy { t: f64 },
}

impl Observable {
    pub fn name(&self) -> String {
        match *self {
            Self::Pairing { t } => format!("pairing@t={t}"),
            Self::FreePairing { t } => format!("free_pairing@t={t}"),
            Self::SecondMoment { t } => format!("second_moment@t={t}"),
            Self::FreeCross { t } => format!("free_cross@t={t}"),
            Self::SpatialAverage { s } => format!("spatial_average@s={s}"),
            Self::PowerMean { t, p } => format!("power_mean@t={t},p={p}"),
            Self::LagProduct { t, p, lag } => format!("lag_product@t={t},p={p},lag={lag}"),
            Self::WickPairing { t } => format!("wick_pairing@t={t}"),
            Self::WickEnergy { t } => format!("wick_energy@t={t}"),
        }
    }

    /// Macroscopic time at which the observable reads the solution.
    pub fn time(&self, eps: f64) -> f64 {
        match *self {
            Self::SpatialAverage { s } => s as f64 * eps * eps,
            Self::Pairing { t }
            | Self::FreePairing { t }
            | Self::SecondMoment { t }
            | Self::FreeCross { t }
            | Self::PowerMean { t, .. }
            | Self::LagProduct { t, .. }
            | Self::WickPairing { t }
            | Self::WickEnergy { t } => t,
        }
    }

    fn wick_time(&self) -> Option<f64> {
        match *self {
            Self::WickPairing { t } | Self::WickEnergy { t } => Some(t),
            _ => None,
        }
    }
}

/// What to measure on each replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Registry {
    pub phi: TestFunctionSpec,
    pub observables: Vec<Observable>,
    /// Index pairs whose cross moment is accumulated.
    #[serde(default)]
    pub pairs: Vec<(usize, usize)>,
    /// Observable whose first-chaos kernel is estimated from the stored noise.
    #[serde(default)]
    pub kernel_source: Option<usize>,
    #[serde(default = "default_kernel_cutoff")]
    pub kernel_cutoff: f64,
}

fn default_kernel_cutoff() -> f64 {
    1e-6
}

impl Registry {
    pub fn new(phi: TestFunctionSpec, observables: Vec<Observable>) -> Self {
        Self { phi, observables, pairs: Vec::new(), kernel_source: None, kernel_cutoff: default_kernel_cutoff() }
    }

    /// Adds `obs` unless present and returns its index.
    pub fn add(&mut self, obs: Observable) -> usize {
        match self.index_of(&obs) {
            Some(i) => i,
            None => {
                self.observables.push(obs);
                self.observables.len() - 1
            }
        }
    }

    pub fn index_of(&self, obs: &Observable) -> Option<usize> {
        self.observables.iter().position(|o| o == obs)
    }

    pub fn add_pair(&mut self, a: Observable, b: Observable) -> (usize, usize) {
        let (i, j) = (self.add(a), self.add(b));
        if i != j && !self.pairs.iter().any(|&p| p == (i, j) || p == (j, i)) {
            self.pairs.push((i, j));
        }
        (i, j)
    }

    pub fn names(&self) -> Vec<String> {
        self.observables.iter().map(Observable::name).collect()
    }

    /// Sorted snapshot times the solver has to land on.
    pub fn times(&self, eps: f64) -> Vec<f64> {
        let mut times: Vec<f64> =
            std::iter::once(0.0).chain(self.observables.iter().map(|o| o.time(eps))).collect();
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
        times
    }
}

/// Compiled form of a [`Registry`] for one parameter set.
#[derive(Debug, Clone)]
pub struct Probe {
    registry: Registry,
    eps: f64,
    phi: TestFunction,
    times: Vec<f64>,
    heat_phi: Vec<(f64, ScalarField)>,
    basis: Option<FirstChaosBasis>,
    wick: Vec<WickPlan>,
}

impl Probe {
    pub fn new(params: &SimParams, registry: Registry) -> Result<Self> {
        let grid = params.grid;
        let phi = registry.phi.build(&grid)?;
        for o in &registry.observables {
            if let Observable::SpatialAverage { s } = o {
                if *s > params.s_max {
                    return Err(Error::MissingSnapshot(o.name()));
                }
            }
            if let Observable::LagProduct { lag, .. } = o {
                if *lag >= grid.points_per_side() {
                    return Err(Error::InvalidParam(format!("lag {lag} exceeds the lattice")));
                }
            }
            if o.time(params.eps) < 0.0 || (o.time(params.eps) == 0.0 && o.wick_time().is_some()) {
                return Err(Error::InvalidParam(format!("{} needs a positive time", o.name())));
            }
        }
        let mut heat_phi = Vec::new();
        for o in &registry.observables {
            if let Observable::FreePairing { t } = *o {
                if !heat_phi.iter().any(|(s, _)| *s == t) {
                    heat_phi.push((t, crate::propagate::heat_propagate(phi.field(), t)?));
                }
            }
        }
        let mut wick: Vec<WickPlan> = Vec::new();
        for t in registry.observables.iter().filter_map(Observable::wick_time) {
            if !wick.iter().any(|p| p.t == t) {
                wick.push(WickPlan::resolved(&grid, &params.mollifier(), params.eps, t)?);
            }
        }
        let basis = match registry.kernel_source {
            Some(i) if i >= registry.observables.len() => {
                return Err(Error::InvalidParam("kernel source refers to an unknown observable".into()))
            }
            Some(_) => Some(FirstChaosBasis::for_test_function(phi.field(), registry.kernel_cutoff)),
            None => None,
        };
        let times = registry.times(params.eps);
        Ok(Self { registry, eps: params.eps, phi, times, heat_phi, basis, wick })
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn test_function(&self) -> &TestFunction {
        &self.phi
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn basis(&self) -> Option<&FirstChaosBasis> {
        self.basis.as_ref()
    }

    pub fn n_coeffs(&self) -> usize {
        self.basis.as_ref().map_or(0, FirstChaosBasis::len)
    }

    /// Runs one replica and reads off every registered observable.
    pub fn evaluate(&self, sim: &mut Simulator, rng: &mut RngStream) -> Result<Record> {
        let (xi, u0) = sim.sample_initial(rng)?;
        let traj = sim.run_from(u0, &self.times)?.with_noise(xi);
        self.measure(sim, &traj)
    }

    pub fn measure(&self, sim: &mut Simulator, traj: &Trajectory) -> Result<Record> {
        let grid = *traj.grid();
        let sites = grid.len() as f64;
        let ws = sim.workspace();
        let u0 = traj.initial();
        let u0_spec: Option<Vec<Complex64>> = if self.wick.is_empty() { None } else { Some(ws.transform(u0)) };
        let mut free_fields: Vec<(f64, ScalarField)> = Vec::new();
        let mut wick_fields: Vec<(f64, ScalarField)> = Vec::new();
        let mut values = Vec::with_capacity(self.registry.observables.len());
        for o in &self.registry.observables {
            let v = match *o {
                Observable::Pairing { t } => inner_product(traj.at(t)?, self.phi.field())?,
                Observable::FreePairing { t } => {
                    let hp = &self.heat_phi.iter().find(|(s, _)| *s == t).expect("compiled").1;
                    inner_product(u0, hp)?
                }
                Observable::SecondMoment { t } => traj.at(t)?.values().iter().map(|v| v * v).sum::<f64>() / sites,
                Observable::FreeCross { t } => {
                    if !free_fields.iter().any(|(s, _)| *s == t) {
                        let mut x = u0.values().to_vec();
                        let mut spec = Vec::new();
                        ws.heat_in_place(&mut x, t, &mut spec);
                        free_fields.push((t, ScalarField::from_values(grid, x, t)?));
                    }
                    let x = &free_fields.iter().find(|(s, _)| *s == t).expect("just inserted").1;
                    let u = traj.at(t)?;
                    u.values().iter().zip(x.values()).map(|(a, b)| a * b).sum::<f64>() / sites
                }
                Observable::SpatialAverage { .. } => {
                    let u = traj.at(o.time(self.eps))?;
                    grid.volume().powf(-0.5) * u.integral()
                }
                Observable::PowerMean { t, p } => {
                    traj.at(t)?.values().iter().map(|v| v.powi(p as i32)).sum::<f64>() / sites
                }
                Observable::LagProduct { t, p, lag } => lag_product(traj.at(t)?, p, lag),
                Observable::WickPairing { t } | Observable::WickEnergy { t } => {
                    if !wick_fields.iter().any(|(s, _)| *s == t) {
                        let plan = self.wick.iter().find(|p| p.t == t).expect("compiled");
                        let w = plan.wick_field(ws, u0_spec.as_deref().expect("computed when plans exist"));
                        wick_fields.push((t, w));
                    }
                    let w = &wick_fields.iter().find(|(s, _)| *s == t).expect("just inserted").1;
                    match o {
                        Observable::WickPairing { .. } => inner_product(w, self.phi.field())?,
                        _ => w.values().iter().map(|v| v * v).sum::<f64>() / sites,
                    }
                }
            };
            values.push(v);
        }
        let noise_coeffs = match &self.basis {
            Some(b) => b.coefficients(ws, traj.noise().ok_or(Error::NoiseNotStored)?),
            None => Vec::new(),
        };
        Ok(Record { values, noise_coeffs })
    }
}

/// Spatial mean of `f(x)^p f(x + lag e_1)^p`, with `e_1` the slowest lattice axis.
fn lag_product(f: &ScalarField, p: u32, lag: usize) -> f64 {
    let grid = f.grid();
    let n = grid.points_per_side();
    let stride = grid.len() / n;
    let pow: Vec<f64> = f.values().iter().map(|v| v.powi(p as i32)).collect();
    let mut acc = 0.0;
    for row in 0..n {
        let shifted = (row + lag) % n;
        let a = &pow[row * stride..(row + 1) * stride];
        let b = &pow[shifted * stride..(shifted + 1) * stride];
        acc += a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    }
    acc / grid.len() as f64
}
