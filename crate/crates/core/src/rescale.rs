//! Diffusively rescaled runs.
//!
//! Instead of solving the microscopic equation and zooming out, the rescaled
//! equation `du = Δu - λ ε^{d-2} u³` is solved directly on the macroscopic
//! torus with the mollifier shrunk to width `ε * base_width`.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{inner_product, GridSpec, ScalarField};
use crate::mollifier::{InitialLaw, MollifierSpec};
use crate::propagate::{heat_propagate, Solver, StepScheme};
use crate::rng::RngStream;
use crate::spectral::{with_spectral, Spectral};

/// `λ ε^{d-2}`, the coupling seen by the rescaled field.
pub fn effective_coupling(lambda: f64, eps: f64, d: usize) -> f64 {
    lambda * eps.powi(d as i32 - 2)
}

pub const DEFAULT_S_MAX: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub lambda: f64,
    pub eps: f64,
    pub grid: GridSpec,
    /// Mollifier radius at `ε = 1`.
    pub base_width: f64,
    pub scheme: StepScheme,
    pub t_list: Vec<f64>,
    /// Microscopic snapshots `k ε²` for `k = 1..=s_max`.
    pub s_max: usize,
    lambda_eps: f64,
}

impl SimParams {
    pub fn new(
        lambda: f64,
        eps: f64,
        grid: GridSpec,
        base_width: f64,
        scheme: StepScheme,
        t_list: Vec<f64>,
    ) -> Result<Self> {
        let p = Self {
            lambda,
            eps,
            grid,
            base_width,
            scheme,
            t_list,
            s_max: DEFAULT_S_MAX,
            lambda_eps: effective_coupling(lambda, eps, grid.dim()),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_s_max(mut self, s_max: usize) -> Self {
        self.s_max = s_max;
        self
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(lambda, self.eps, self.grid, self.base_width, self.scheme, self.t_list.clone())
            .map(|p| p.with_s_max(self.s_max))
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.lambda, eps, self.grid, self.base_width, self.scheme, self.t_list.clone())
            .map(|p| p.with_s_max(self.s_max))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidParam(format!("coupling {} must be nonnegative", self.lambda)));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::InvalidParam(format!("eps = {} must lie in (0, 1]", self.eps)));
        }
        if self.t_list.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
            return Err(Error::InvalidParam("observation times must be strictly positive".into()));
        }
        self.scheme.validate()?;
        let width = self.mollifier().width;
        let h = self.grid.spacing();
        if width < 2.0 * h {
            return Err(Error::EpsilonUnresolvable { eps: self.eps, width, spacing: h });
        }
        self.mollifier().check_resolved(&self.grid)
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn lambda_eps(&self) -> f64 {
        self.lambda_eps
    }

    pub fn mollifier(&self) -> MollifierSpec {
        MollifierSpec::bump(self.eps * self.base_width)
    }

    /// Microscopic snapshot time `s ε²`.
    pub fn micro_time(&self, s: usize) -> f64 {
        s as f64 * self.eps * self.eps
    }

    /// Sorted union of `0`, the microscopic times and the observation times.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let mut times: Vec<f64> = std::iter::once(0.0)
            .chain((1..=self.s_max).map(|s| self.micro_time(s)))
            .chain(self.t_list.iter().copied())
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
        times
    }
}

/// Snapshots of one run plus the white noise that drove it.
#[derive(Debug, Clone)]
pub struct Trajectory {
    snapshots: Vec<ScalarField>,
    noise: Option<ScalarField>,
}

impl Trajectory {
    pub fn new(snapshots: Vec<ScalarField>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::InsufficientSnapshots { from: 0.0, to: 0.0 });
        }
        for w in snapshots.windows(2) {
            w[0].check_grid(&w[1])?;
            if w[1].time() < w[0].time() {
                return Err(Error::InvalidParam("snapshot times must ascend".into()));
            }
        }
        Ok(Self { snapshots, noise: None })
    }

    pub fn with_noise(mut self, noise: ScalarField) -> Self {
        self.noise = Some(noise);
        self
    }

    pub fn snapshots(&self) -> &[ScalarField] {
        &self.snapshots
    }

    pub fn noise(&self) -> Option<&ScalarField> {
        self.noise.as_ref()
    }

    pub fn grid(&self) -> &GridSpec {
        self.snapshots[0].grid()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time()).collect()
    }

    pub fn initial(&self) -> &ScalarField {
        &self.snapshots[0]
    }

    pub fn at(&self, t: f64) -> Result<&ScalarField> {
        let tol = 1e-10 * t.abs().max(1.0);
        self.snapshots
            .iter()
            .find(|s| (s.time() - t).abs() <= tol)
            .ok_or(Error::TimeNotInTrajectory(t))
    }

    /// Pointwise sum of two trajectories on identical snapshot times.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.times() != other.times() {
            return Err(Error::SnapshotMismatch);
        }
        let snapshots = self
            .snapshots
            .iter()
            .zip(&other.snapshots)
            .map(|(a, b)| a.add(b))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(snapshots)
    }
}

/// Reusable per-worker state for repeated rescaled runs.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: SimParams,
    law: InitialLaw,
    solver: Solver,
}

impl Simulator {
    pub fn new(params: SimParams) -> Result<Self> {
        params.validate()?;
        let law = InitialLaw::new(params.grid, params.mollifier())?;
        let solver = Solver::new(params.grid, params.lambda_eps(), params.scheme)?;
        Ok(Self { params, law, solver })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn law(&self) -> &InitialLaw {
        &self.law
    }

    pub fn workspace(&mut self) -> &mut Spectral {
        self.solver.workspace()
    }

    /// Draws `(xi, u(0) = rho_eps * xi)`.
    pub fn sample_initial(&mut self, rng: &mut RngStream) -> Result<(ScalarField, ScalarField)> {
        self.law.sample(self.solver.workspace(), rng)
    }

    pub fn run(&mut self, rng: &mut RngStream) -> Result<Trajectory> {
        let times = self.params.snapshot_times();
        self.run_at(rng, &times)
    }

    pub fn run_at(&mut self, rng: &mut RngStream, times: &[f64]) -> Result<Trajectory> {
        let (xi, u0) = self.sample_initial(rng)?;
        self.run_from(u0, times).map(|t| t.with_noise(xi))
    }

    pub fn run_from(&mut self, u0: ScalarField, times: &[f64]) -> Result<Trajectory> {
        let snapshots = self.solver.solve(&u0, times)?;
        Trajectory::new(snapshots)
    }
}

pub fn simulate_rescaled(params: &SimParams, rng: &mut RngStream) -> Result<Trajectory> {
    Simulator::new(params.clone())?.run(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunctionKind {
    GaussianBump,
    Bump,
}

/// Serializable description of a [`TestFunction`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionSpec {
    pub kind: TestFunctionKind,
    pub center: Vec<f64>,
    pub width: f64,
}

impl TestFunctionSpec {
    pub fn build(&self, grid: &GridSpec) -> Result<TestFunction> {
        TestFunction::build(grid, self.kind, &self.center, self.width)
    }
}

/// Smooth, rapidly decaying test function sampled on the grid.
#[derive(Debug, Clone)]
pub struct TestFunction {
    kind: TestFunctionKind,
    center: Vec<f64>,
    width: f64,
    field: ScalarField,
    norm_sq: f64,
}

impl TestFunction {
    /// `exp(-|x - c|² / (2 w²))`.
    pub fn gaussian_bump(grid: &GridSpec, center: &[f64], width: f64) -> Result<Self> {
        Self::build(grid, TestFunctionKind::GaussianBump, center, width)
    }

    /// `exp(1 - 1/(1 - |x - c|²/w²))` inside the ball, zero outside.
    pub fn bump(grid: &GridSpec, center: &[f64], width: f64) -> Result<Self> {
        Self::build(grid, TestFunctionKind::Bump, center, width)
    }

    pub fn build(grid: &GridSpec, kind: TestFunctionKind, center: &[f64], width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::InvalidParam(format!("test function width {width} must be positive")));
        }
        if center.len() != grid.dim() {
            return Err(Error::InvalidParam("test function centre has the wrong dimension".into()));
        }
        let values = (0..grid.len())
            .map(|i| {
                let r2 = grid.dist2_to_point(i, center) / (width * width);
                match kind {
                    TestFunctionKind::GaussianBump => (-0.5 * r2).exp(),
                    TestFunctionKind::Bump if r2 < 1.0 => (1.0 - 1.0 / (1.0 - r2)).exp(),
                    TestFunctionKind::Bump => 0.0,
                }
            })
            .collect();
        let field = ScalarField::from_values(*grid, values, 0.0)?;
        let norm_sq = inner_product(&field, &field)?;
        Ok(Self { kind, center: center.to_vec(), width, field, norm_sq })
    }

    pub fn kind(&self) -> TestFunctionKind {
        self.kind
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    /// Cached `‖φ‖²_{L²}`.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }
}

pub fn observable(traj: &Trajectory, t: f64, phi: &TestFunction) -> Result<f64> {
    inner_product(traj.at(t)?, phi.field())
}

/// Free field `X(t) = p_t * u(0)`.
pub fn picard_x(traj: &Trajectory, t: f64) -> Result<ScalarField> {
    heat_propagate(traj.initial(), t)
}

/// `p_t * u(0)`, paired with `u(t)` in the cross-correlation test.
pub fn heat_of_initial(traj: &Trajectory, t: f64) -> Result<ScalarField> {
    picard_x(traj, t)
}

/// `ε^{d-2} ∫_0^t p_{t-s} * (f g h)(s) ds` by the trapezoid rule on the shared snapshots.
pub fn picard_n(f: &Trajectory, g: &Trajectory, h: &Trajectory, t: f64, eps: f64) -> Result<ScalarField> {
    let times = f.times();
    if g.times() != times || h.times() != times {
        return Err(Error::SnapshotMismatch);
    }
    let grid = *f.grid();
    let d = grid.dim();
    let tol = 1e-10 * t.abs().max(1.0);
    let nodes: Vec<usize> = (0..times.len()).filter(|&i| times[i] <= t + tol).collect();
    if nodes.is_empty() || times[nodes[0]].abs() > tol || (times[*nodes.last().unwrap()] - t).abs() > tol {
        return Err(Error::InsufficientSnapshots { from: 0.0, to: t });
    }
    let scale = eps.powi(d as i32 - 2);
    with_spectral(&grid, |ws| {
        let len = ws.spectrum_len();
        let k2 = ws.wavenumbers_squared().to_vec();
        let mut acc = vec![Complex64::default(); len];
        let mut spec = vec![Complex64::default(); len];
        let mut prod = vec![0.0; grid.len()];
        for (pos, &i) in nodes.iter().enumerate() {
            let left = if pos > 0 { times[i] - times[nodes[pos - 1]] } else { 0.0 };
            let right = if pos + 1 < nodes.len() { times[nodes[pos + 1]] - times[i] } else { 0.0 };
            let weight = scale * 0.5 * (left + right);
            if weight == 0.0 {
                continue;
            }
            let (a, b, c) = (f.snapshots[i].values(), g.snapshots[i].values(), h.snapshots[i].values());
            for (k, p) in prod.iter_mut().enumerate() {
                *p = a[k] * b[k] * c[k];
            }
            ws.forward(&prod, &mut spec);
            let lag = t - times[i];
            for ((x, y), &kk) in acc.iter_mut().zip(&spec).zip(&k2) {
                *x += *y * (weight * (-kk * lag).exp());
            }
        }
        let mut out = vec![0.0; grid.len()];
        ws.inverse(&mut acc, &mut out);
        ScalarField::from_values(grid, out, t)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagate::{dense_times, solve};

    fn small_params(lambda: f64, eps: f64) -> SimParams {
        let grid = GridSpec::new(3, 16, 4.0).unwrap();
        SimParams::new(lambda, eps, grid, 2.5, StepScheme::new(0.02), vec![0.25, 0.5]).unwrap().with_s_max(4)
    }

    /// Solves the unscaled equation on the torus of side `L / eps`, zooms out
    /// by hand and compares with the direct rescaled run from the same noise.
    fn two_routes(micro_dt_factor: f64) -> (ScalarField, ScalarField) {
        let (lambda, eps, t, dt) = (2.0, 0.5, 0.3, 0.01);
        let macro_grid = GridSpec::new(3, 16, 4.0).unwrap();
        let micro_grid = GridSpec::new(3, 16, 4.0 / eps).unwrap();
        let rescaled = SimParams::new(lambda, eps, macro_grid, 1.0, StepScheme::new(dt), vec![t]).unwrap().with_s_max(0);
        let micro = SimParams::new(
            lambda,
            1.0,
            micro_grid,
            1.0,
            StepScheme::new(micro_dt_factor * dt / (eps * eps)),
            vec![t / (eps * eps)],
        )
        .unwrap()
        .with_s_max(0);
        let a = simulate_rescaled(&rescaled, &mut RngStream::new(4, 0)).unwrap();
        let b = simulate_rescaled(&micro, &mut RngStream::new(4, 0)).unwrap();
        let zoomed = eps.powf(-1.5);
        let direct = a.at(t).unwrap().clone();
        let by_hand = ScalarField::from_values(
            macro_grid,
            b.at(t / (eps * eps)).unwrap().values().iter().map(|u| zoomed * u).collect(),
            t,
        )
        .unwrap();
        (direct, by_hand)
    }

    fn rel_l2(a: &ScalarField, b: &ScalarField) -> f64 {
        let diff = a.sub(b).unwrap();
        (inner_product(&diff, &diff).unwrap() / inner_product(b, b).unwrap()).sqrt()
    }

    #[test]
    fn rescaling_commutes_with_the_microscopic_solve() {
        let (direct, by_hand) = two_routes(1.0);
        assert!(rel_l2(&direct, &by_hand) < 1e-10, "{}", rel_l2(&direct, &by_hand));
        let (direct, coarse) = two_routes(3.0);
        let r = rel_l2(&direct, &coarse);
        assert!(r > 0.0 && r < 0.05, "{r}");
    }

    #[test]
    fn effective_coupling_values() {
        assert!((effective_coupling(1.0, 0.1, 3) - 0.1).abs() < 1e-15);
        assert_eq!(effective_coupling(7.0, 1.0, 4), 7.0);
        assert!((effective_coupling(3.0, 0.5, 5) - 0.375).abs() < 1e-15);
        assert_eq!(effective_coupling(2.0, 0.3, 2), 2.0);
    }

    #[test]
    fn params_reject_bad_input() {
        let grid = GridSpec::new(3, 16, 4.0).unwrap();
        let scheme = StepScheme::new(0.02);
        assert!(matches!(
            SimParams::new(1.0, 0.1, grid, 2.5, scheme, vec![0.5]),
            Err(Error::EpsilonUnresolvable { .. })
        ));
        assert!(SimParams::new(1.0, 0.2, grid, 2.5, scheme, vec![0.0]).is_err());
        assert!(SimParams::new(1.0, 1.5, grid, 2.5, scheme, vec![0.5]).is_err());
    }

    #[test]
    fn snapshot_times_include_micro_times() {
        let p = small_params(1.0, 0.4);
        let times = p.snapshot_times();
        assert_eq!(times[0], 0.0);
        assert!(times.iter().any(|&t| (t - 0.16).abs() < 1e-15));
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        assert!(times.contains(&0.5));
    }

    #[test]
    fn zero_coupling_run_is_heat_flow() {
        let p = small_params(0.0, 0.4);
        let traj = simulate_rescaled(&p, &mut RngStream::new(9, 0)).unwrap();
        for t in [0.25, 0.5] {
            let want = heat_propagate(traj.initial(), t).unwrap();
            for (a, b) in traj.at(t).unwrap().values().iter().zip(want.values()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        assert!(matches!(traj.at(0.3), Err(Error::TimeNotInTrajectory(_))));
    }

    #[test]
    fn unit_eps_is_the_microscopic_equation() {
        let grid = GridSpec::new(3, 16, 4.0).unwrap();
        let p = SimParams::new(1.5, 1.0, grid, 1.0, StepScheme::new(0.02), vec![0.25]).unwrap().with_s_max(3);
        let traj = simulate_rescaled(&p, &mut RngStream::new(4, 2)).unwrap();
        let (xi, u0) = {
            let law = InitialLaw::new(p.grid, p.mollifier()).unwrap();
            with_spectral(&p.grid, |ws| law.sample(ws, &mut RngStream::new(4, 2))).unwrap()
        };
        assert_eq!(traj.noise().unwrap(), &xi);
        let direct = solve(&u0, 1.5, &p.scheme, &p.snapshot_times()).unwrap();
        for (a, b) in traj.snapshots().iter().zip(&direct) {
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn test_functions_are_cached_and_decay() {
        let grid = GridSpec::new(2, 32, 4.0).unwrap();
        let g = TestFunction::gaussian_bump(&grid, &[2.0, 2.0], 0.3).unwrap();
        let exact = std::f64::consts::PI * 0.09;
        assert!((g.norm_sq() - exact).abs() < 1e-8);
        let b = TestFunction::bump(&grid, &[0.0, 0.0], 0.5).unwrap();
        assert_eq!(b.field().values()[grid.index(&[0, 0])], 1.0);
        assert_eq!(b.field().values()[grid.index(&[4, 0])], 0.0);
        assert_eq!(b.field().values()[grid.index(&[28, 0])], 0.0);
    }

    #[test]
    fn observable_is_linear_in_the_trajectory() {
        let p = small_params(1.0, 0.4);
        let a = simulate_rescaled(&p, &mut RngStream::new(1, 0)).unwrap();
        let b = simulate_rescaled(&p, &mut RngStream::new(1, 1)).unwrap();
        let phi = TestFunction::gaussian_bump(&p.grid, &[1.0, 1.0, 1.0], 0.5).unwrap();
        let sum = a.add(&b).unwrap();
        let lhs = observable(&sum, 0.5, &phi).unwrap();
        let rhs = observable(&a, 0.5, &phi).unwrap() + observable(&b, 0.5, &phi).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn observable_of_localized_field_away_from_support_vanishes() {
        let grid = GridSpec::new(2, 32, 4.0).unwrap();
        let f = TestFunction::bump(&grid, &[0.0, 0.0], 0.5).unwrap().field().clone();
        let traj = Trajectory::new(vec![f]).unwrap();
        let far = TestFunction::bump(&grid, &[2.0, 2.0], 0.5).unwrap();
        assert_eq!(observable(&traj, 0.0, &far).unwrap(), 0.0);
    }

    #[test]
    fn picard_x_ignores_the_coupling() {
        let a = simulate_rescaled(&small_params(0.0, 0.4), &mut RngStream::new(6, 0)).unwrap();
        let b = simulate_rescaled(&small_params(5.0, 0.4), &mut RngStream::new(6, 0)).unwrap();
        assert_eq!(picard_x(&a, 0.5).unwrap(), picard_x(&b, 0.5).unwrap());
        assert_eq!(heat_of_initial(&b, 0.5).unwrap(), picard_x(&b, 0.5).unwrap());
        // At zero coupling the free field is the solution itself.
        for (x, y) in heat_of_initial(&a, 0.5).unwrap().values().iter().zip(a.at(0.5).unwrap().values()) {
            assert!((x - y).abs() < 1e-10);
        }
        // Semigroup: X(s + t) = p_t * X(s).
        let two = heat_propagate(&picard_x(&a, 0.2).unwrap(), 0.3).unwrap();
        for (x, y) in two.values().iter().zip(picard_x(&a, 0.5).unwrap().values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn picard_n_is_trilinear_and_symmetric() {
        let grid = GridSpec::new(2, 16, 2.0).unwrap();
        let scheme = StepScheme::new(0.05);
        let times = dense_times(&scheme, 0.0, &[0.3]);
        let mk = |f: &dyn Fn(&[f64]) -> f64| {
            Trajectory::new(solve(&ScalarField::from_fn(grid, f), 1.0, &scheme, &times).unwrap()).unwrap()
        };
        let f = mk(&|x| (3.0 * x[0]).sin() + 0.5);
        let g = mk(&|x| x[1] * x[1] - 0.5);
        let h = mk(&|x| (x[0] + x[1]).cos());
        let a = picard_n(&f, &g, &h, 0.3, 0.5).unwrap();
        let b = picard_n(&h, &f, &g, 0.3, 0.5).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
        let zero = mk(&|_| 0.0);
        assert_eq!(picard_n(&f, &zero, &h, 0.3, 0.5).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn picard_n_on_constants_is_scalar_quadrature() {
        let grid = GridSpec::new(3, 8, 1.0).unwrap();
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.05).collect();
        let vals: Vec<f64> = times.iter().map(|t| 1.0 + t * t).collect();
        let traj = Trajectory::new(
            times.iter().zip(&vals).map(|(&t, &v)| ScalarField::constant(grid, v).with_time(t)).collect(),
        )
        .unwrap();
        let eps: f64 = 0.3;
        let got = picard_n(&traj, &traj, &traj, 0.5, eps).unwrap();
        let mut oracle = 0.0;
        for k in 1..times.len() {
            oracle += 0.5 * 0.05 * (vals[k].powi(3) + vals[k - 1].powi(3));
        }
        oracle *= eps;
        assert!(got.values().iter().all(|v| (v - oracle).abs() < 1e-12));
    }

    #[test]
    fn first_picard_identity_holds_to_quadrature_order() {
        // u(t) = X(t) - λ_ε/ε^{d-2} * N(u,u,u)(t); the mismatch is the mild
        // residual and must shrink ~4x when the step halves.
        let grid = GridSpec::new(3, 16, 4.0).unwrap();
        let eps = 0.4;
        let lambda = 2.0;
        let mut errs = Vec::new();
        for dt in [0.02, 0.01] {
            let p = SimParams::new(lambda, eps, grid, 2.5, StepScheme::new(dt), vec![0.2]).unwrap();
            let mut sim = Simulator::new(p.clone()).unwrap();
            let times = dense_times(&p.scheme, 0.0, &[0.2]);
            let traj = sim.run_at(&mut RngStream::new(2, 0), &times).unwrap();
            let x = picard_x(&traj, 0.2).unwrap();
            let n = picard_n(&traj, &traj, &traj, 0.2, eps).unwrap();
            let u = traj.at(0.2).unwrap();
            let err = (0..grid.len())
                .map(|i| (u.values()[i] - x.values()[i] + lambda * n.values()[i]).abs())
                .fold(0.0, f64::max);
            errs.push(err / u.max_abs());
        }
        let ratio = errs[0] / errs[1];
        assert!(errs[1] < 1e-3, "{errs:?}");
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio} from {errs:?}");
    }
}
