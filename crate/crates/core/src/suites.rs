//! Named verification suites: the deterministic solver checks and the
//! twelve desk-scale criteria, each reduced to a list of [`Check`]s.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::mollifier::{covariance_init, make_mollifier, MollifierSpec};
use crate::oracle::{clt_moment_test, ode_layer_predictor, pairing_count, SyntheticFieldSpec, Transform};
use crate::propagate::{
    cubic_flow, cubic_flow_value, dense_times, heat_propagate, linearized_solve, mild_residual, solve, StepScheme,
};
use crate::rescale::{SimParams, Simulator, TestFunctionKind, TestFunctionSpec};
use crate::rng::RngStream;
use crate::stats::accumulator::{EnsembleAccumulator, Estimate};
use crate::stats::chaos::{pi3_refined, WickPlan};
use crate::stats::ensemble::{ensemble_run, run_replicas, EnsembleSpec};
use crate::stats::estimators::{
    coming_down_check, cross_correlation, decorrelation_test, free_pairing_variance, free_point_covariance,
    lambda_monotonicity, pointwise_cross_moment, sigma_lambda_estimate, variance_two_sided, GAUSSIAN_STANDARDIZED,
};
use crate::stats::observables::{Observable, Probe, Registry};
use crate::stats::report::{checks_to_csv, Check, Rule};

pub const KNOWN_SUITES: [&str; 5] = ["deterministic", "clt-desk", "gaussianity", "coming-down", "calibration"];

/// Suites that need an ensemble at the configured `(λ, ε)`.
pub const ENSEMBLE_SUITES: [&str; 3] = ["gaussianity", "coming-down", "calibration"];

pub fn check_suite_name(name: &str) -> Result<()> {
    if KNOWN_SUITES.contains(&name) {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown suite `{name}`; known suites: {}", KNOWN_SUITES.join(", "))))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u32,
    pub title: String,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub seconds: f64,
}

impl CriterionOutcome {
    fn new(id: u32, title: &str) -> Self {
        Self { id, title: title.into(), checks: Vec::new(), notes: Vec::new(), seconds: 0.0 }
    }

    pub fn pass(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn line(&self) -> String {
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        let verdict = if self.pass() { "PASS" } else { "FAIL" };
        let mut line = format!(
            "criterion {:>2} {verdict}  {} ({} checks, {:.1}s)",
            self.id,
            self.title,
            self.checks.len(),
            self.seconds
        );
        if !failed.is_empty() {
            line.push_str(&format!(" failed: {}", failed.join(", ")));
        }
        line
    }

    fn check(&mut self, check: Check) {
        self.checks.push(check);
    }

    /// A deterministic comparison with no sampling error.
    fn exact(&mut self, name: impl Into<String>, value: f64, rule: Rule) {
        self.checks.push(Check::new(name, Estimate::exact(value), rule));
    }
}

/// Scale and budget of the desk runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Desk {
    pub grid: GridSpec,
    pub base_width: f64,
    /// Descending; the last entry is the smallest `ε`.
    pub eps_ladder: Vec<f64>,
    pub t_list: Vec<f64>,
    pub dt: f64,
    /// Microscopic index for the spatial-average statistic.
    pub s: usize,
    pub phi: TestFunctionSpec,
    pub replicas: u64,
    pub synthetic_replicas: u64,
    pub seed: u64,
    pub n_batches: usize,
    pub workers: usize,
    pub z: f64,
    pub decorrelation_t: f64,
    pub decorrelation_p: u32,
    pub wick_t: f64,
    /// Coupling of the ODE-layer transform used by the synthetic CLT field.
    pub synthetic_lambda: f64,
}

impl Desk {
    pub fn standard() -> Self {
        let side = 4.0;
        Self {
            grid: GridSpec::new(3, 32, side).expect("valid desk grid"),
            base_width: 2.5,
            eps_ladder: vec![0.4, 0.2, 0.1],
            t_list: vec![0.25, 0.5, 1.0],
            dt: 0.02,
            s: 16,
            phi: TestFunctionSpec { kind: TestFunctionKind::GaussianBump, center: vec![0.5 * side; 3], width: 0.5 },
            replicas: 1024,
            synthetic_replicas: 4096,
            seed: 20_240_601,
            n_batches: 32,
            workers: 1,
            z: 4.0,
            decorrelation_t: 0.09,
            decorrelation_p: 2,
            wick_t: 1.0,
            synthetic_lambda: 4.0,
        }
    }

    /// The standard desk geometry with the replica budget, seed and workers of `cfg`.
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let ens = cfg.ensemble_spec()?;
        Ok(Self {
            replicas: ens.n_replicas,
            synthetic_replicas: 4 * ens.n_replicas,
            seed: ens.seed,
            n_batches: ens.n_batches,
            workers: ens.workers,
            ..Self::standard()
        })
    }

    pub fn eps_min(&self) -> f64 {
        *self.eps_ladder.last().expect("non-empty ladder")
    }

    pub fn t_max(&self) -> f64 {
        self.t_list.iter().copied().fold(0.0, f64::max)
    }

    pub fn ensemble_spec(&self) -> EnsembleSpec {
        EnsembleSpec { n_replicas: self.replicas, seed: self.seed, n_batches: self.n_batches, workers: self.workers }
    }

    pub fn params(&self, lambda: f64, eps: f64) -> Result<SimParams> {
        let s_max = if eps == self.eps_min() { self.s } else { 0 };
        Ok(SimParams::new(lambda, eps, self.grid, self.base_width, StepScheme::new(self.dt), self.t_list.clone())?
            .with_s_max(s_max))
    }

    /// Everything the criteria read from one ensemble.
    pub fn registry(&self, lambda: f64, eps: f64) -> Registry {
        let mut reg = Registry::new(self.phi.clone(), vec![]);
        for &t in &self.t_list {
            reg.add_pair(Observable::Pairing { t }, Observable::FreePairing { t });
            reg.add(Observable::SecondMoment { t });
            reg.add(Observable::FreeCross { t });
        }
        if eps == self.eps_min() {
            reg.add(Observable::SpatialAverage { s: self.s });
            let (t, p) = (self.decorrelation_t, self.decorrelation_p);
            reg.add(Observable::PowerMean { t, p });
            for lag in self.lags() {
                reg.add(Observable::LagProduct { t, p, lag });
            }
            if lambda == 0.0 {
                reg.add(Observable::WickEnergy { t: self.wick_t });
            }
        }
        reg
    }

    pub fn lags(&self) -> Vec<usize> {
        (0..=self.grid.points_per_side() / 2).collect()
    }
}

/// Desk ensembles are shared between criteria; each `(λ, ε)` runs once.
#[derive(Debug)]
pub struct Lab {
    pub desk: Desk,
    cache: Vec<((f64, f64), EnsembleAccumulator)>,
}

impl Lab {
    pub fn new(desk: Desk) -> Self {
        Self { desk, cache: Vec::new() }
    }

    pub fn ensemble(&mut self, lambda: f64, eps: f64) -> Result<&EnsembleAccumulator> {
        if let Some(i) = self.cache.iter().position(|(k, _)| *k == (lambda, eps)) {
            return Ok(&self.cache[i].1);
        }
        let params = self.desk.params(lambda, eps)?;
        let acc = ensemble_run(&params, self.desk.registry(lambda, eps), &self.desk.ensemble_spec())?;
        self.cache.push(((lambda, eps), acc));
        Ok(&self.cache.last().expect("just pushed").1)
    }

    pub fn run(&mut self, id: u32) -> Result<CriterionOutcome> {
        let start = std::time::Instant::now();
        let mut out = match id {
            1 => deterministic_propagators(),
            2 => comparison_principle(&self.desk),
            3 => free_field_calibration(self),
            4 => gaussianity_small_eps(self),
            5 => two_sided_variance(self),
            6 => coming_down(self),
            7 => sigma_lambda(self),
            8 => creation_of_noise(self),
            9 => third_chaos(self),
            10 => decorrelation(self),
            11 => clt_oracle(&self.desk),
            12 => reproducibility(&self.desk),
            _ => Err(Error::InvalidParam(format!("no criterion {id}"))),
        }?;
        out.seconds = start.elapsed().as_secs_f64();
        Ok(out)
    }
}

fn smooth_field(grid: GridSpec) -> ScalarField {
    let l = grid.side();
    let k = 2.0 * std::f64::consts::PI / l;
    ScalarField::from_fn(grid, |x| {
        1.2 * (k * x[0]).cos() + 0.8 * (k * x[1]).sin() * (2.0 * k * x[2]).cos() + 0.3
    })
}

fn max_abs_diff(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    Ok(a.sub(b)?.max_abs())
}

/// Heat eigenfunctions, the semigroup law, the cubic flow, Strang order and
/// the mild-form residual.
pub fn deterministic_propagators() -> Result<CriterionOutcome> {
    let mut out = CriterionOutcome::new(1, "deterministic propagators");
    let grid = GridSpec::new(3, 16, 4.0)?;
    let k = 2.0 * std::f64::consts::PI / grid.side();
    let (m, t) = ([1.0, 2.0, 0.0], 0.3);
    let mode = ScalarField::from_fn(grid, |x| (k * (m[0] * x[0] + m[1] * x[1] + m[2] * x[2])).cos());
    let decay = (-(k * k) * (m[0] * m[0] + m[1] * m[1]) * t).exp();
    let err = max_abs_diff(&heat_propagate(&mode, t)?, &mode.map(|v| v * decay))?;
    out.exact("heat_eigenfunction_decay", err, Rule::AtMost { bound: 1e-12, z: 0.0 });

    let f = smooth_field(grid);
    let two_steps = heat_propagate(&heat_propagate(&f, 0.2)?, 0.35)?;
    let one_step = heat_propagate(&f, 0.55)?;
    let rel = max_abs_diff(&two_steps, &one_step)? / one_step.max_abs();
    out.exact("heat_semigroup", rel, Rule::AtMost { bound: 1e-12, z: 0.0 });

    let flowed = cubic_flow(&f, 1.5, 0.7);
    let closed = f.map(|u| u / (1.0 + 2.0 * 1.5 * 0.7 * u * u).sqrt());
    out.exact("cubic_flow_closed_form", max_abs_diff(&flowed, &closed)?, Rule::AtMost { bound: 1e-14, z: 0.0 });
    out.exact(
        "cubic_flow_two_thirds",
        (cubic_flow_value(2.0, 1.0, 1.0) - 2.0 / 3.0).abs(),
        Rule::AtMost { bound: 1e-14, z: 0.0 },
    );

    let (lambda, t_end, dt) = (1.0, 0.5, 0.05);
    let f0 = f.map(|u| 1.5 * u);
    let at = |dt: f64| -> Result<ScalarField> {
        Ok(solve(&f0, lambda, &StepScheme::new(dt), &[t_end])?.pop().expect("one snapshot"))
    };
    let (a, b, c) = (at(dt)?, at(dt / 2.0)?, at(dt / 4.0)?);
    let ratio = max_abs_diff(&a, &b)? / max_abs_diff(&b, &c)?;
    out.exact("strang_richardson_ratio", ratio, Rule::Between { lo: 3.5, hi: 4.5, z: 0.0 });

    let residual = |dt: f64| -> Result<f64> {
        let scheme = StepScheme::new(dt);
        let times = dense_times(&scheme, 0.0, &[t_end]);
        let traj = solve(&f0, lambda, &scheme, &times)?;
        mild_residual(&traj, lambda, 0.0, t_end)
    };
    let shrink = residual(dt)? / residual(dt / 2.0)?;
    out.exact("mild_residual_halving", shrink, Rule::Between { lo: 3.0, hi: 5.0, z: 0.0 });
    Ok(out)
}

/// `0 <= v(t) <= p_t * rho_eps` for the tangent flow started from `rho_eps`.
pub fn comparison_principle(desk: &Desk) -> Result<CriterionOutcome> {
    let mut out = CriterionOutcome::new(2, "comparison principle");
    let (lambda, eps, replicas) = (1.0, desk.eps_min(), 16u64);
    let params = desk.params(lambda, eps)?;
    let scheme = params.scheme;
    let t = desk.t_max();
    let times = dense_times(&scheme, 0.0, &[t]);
    let rho = make_mollifier(&params.mollifier(), &desk.grid)?;
    let ceiling = heat_propagate(&rho, t)?;
    let mut sim = Simulator::new(params)?;
    let (mut lowest, mut excess) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in 0..replicas {
        let traj = sim.run_at(&mut RngStream::new(desk.seed ^ 0xC0, r), &times)?;
        let v = linearized_solve(traj.snapshots(), &rho, sim.params().lambda_eps(), &scheme)?;
        lowest = lowest.min(v.min());
        excess = excess.max(v.sub(&ceiling)?.max());
    }
    out.exact("tangent_nonnegative", -lowest, Rule::AtMost { bound: 1e-8, z: 0.0 });
    out.exact("tangent_below_heat", excess, Rule::AtMost { bound: 1e-8, z: 0.0 });
    out.notes.push(format!("{replicas} replicas: min v = {lowest:.3e}, max(v - p_t*rho) = {excess:.3e}"));
    Ok(out)
}

fn name_index(acc: &EnsembleAccumulator, obs: Observable) -> Result<usize> {
    acc.index_of(&obs.name())
}

pub fn free_field_calibration(lab: &mut Lab) -> Result<CriterionOutcome> {
    let mut out = CriterionOutcome::new(3, "free-field calibration");
    let desk = lab.desk.clone();
    let eps = desk.eps_min();
    let moll = MollifierSpec::bump(eps * desk.base_width);
    let phi = desk.phi.build(&desk.grid)?;
    let acc = lab.ensemble(0.0, eps)?;
    for &t in &desk.t_list {
        let i = name_index(acc, Observable::Pairing { t })?;
        let exact = free_pairing_variance(&desk.grid, &moll, t, phi.field())?;
        out.check(Check::new(
            format!("variance@t={t}"),
            acc.estimate(|m| m.variance(i) / exact),
            Rule::Near { target: 1.0, z: 3.0 },
        ));
        out.check(Check::new(
            format!("kurtosis@t={t}"),
            acc.estimate(|m| m.standardized(i, 4)),
            Rule::Near { target: 3.0, z: 3.0 },
        ));
        out.check(Check::new(format!("cross_correlation@t={t}"), cross_correlation(acc, t)?, Rule::Near {
            target: 1.0,
            z: 3.0,
        }));
    }
    out.check(Check::new("integrated_covariance", sigma_lambda_estimate(acc, desk.s)?, Rule::Near {
        target: 1.0,
        z: 3.0,
    }));
    Ok(out)
}

pub fn gaussianity_checks(acc: &EnsembleAccumulator, t: f64, z: f64) -> Result<Vec<Check>> {
    let i = name_index(acc, Observable::Pairing { t })?;
    Ok(GAUSSIAN_STANDARDIZED
        .iter()
        .map(|&(k, target)| {
            Check::new(format!("standardized_{k}@t={t}"), acc.estimate(|m| m.standardized(i, k)), Rule::Near {
                target,
                z,
            })
        })
        .collect())
}

pub fn gaussianity_small_eps(lab: &mut Lab) -> Result<CriterionOutcome> {
    let mut out = CriterionOutcome::new(4, "gaussianity at small eps");
    let desk = lab.desk.clone();
    let lambda = 1.0;
    for &t in &desk.t_list {
        for c in gaussianity_checks(lab.ensemble(lambda, desk.eps_min())?, t, desk.z)? {
            out.check(c);
        }
    }
    // The trend is read on the latest observation time.
    let t = desk.t_max();
    let mut zs = Vec::new();
    for &eps in &desk.eps_ladder {
        let acc = lab.ensemble(lambda, eps)?;
        let i = name_index(acc, Observable::Pairing { t })?;
        let z4 = acc.estimate(|m| m.standardized(i, 4)).z(3.0).map_or(f64::INFINITY, f64::abs);
        zs.push(z4);
    }
    let rises = zs.windows(2).filter(|w| w[1] > w[0]).count();
    out.exact(format!("kurtosis_z_nonincreasing@t={t}"), rises as f64, Rule::AtMost { bound: 0.0, z: 0.0 });
    out.notes.push(format!("|z4| along eps ladder {:?}: {zs:.2?}", desk.eps_ladder));
    Ok(out)
}

pub fn two_sided_variance(lab: &mut Lab) -> Result<CriterionOutcome> {
    let mut out = CriterionOutcome::new(5, "two-sided variance");
    let desk = lab.desk.clone();
    let phi = desk.phi.build(&desk.grid)?;
    for &t in &desk.t_list {
        let mut lower = Vec::new();
        for &eps in &desk.eps_ladder {
            let moll = MollifierSpec::bump(eps * desk.base_width);
            let est = variance_two_sided(lab.ensemble(1.0, eps)?, t, phi.field(), &moll)?;
            lower.push(est.value - 3.0 * est.se_or_nan());
            out.check(Check::new(format!("ratio@t={t},eps={eps}"), est, Rule::Between { lo: 0.05, hi: 1.0, z: 3.0 }));
        }
        let (lo, hi) = lower.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        out.exact(format!("lower_edge_stable@t={t}"), lo / hi, Rule::AtLeast { bound: 0.5, z: 0.0 });
    }
    Ok(out)
}

pub fn coming_down(lab: &mut Lab) -> Result<CriterionOutcome> {
    let mut out = CriterionOutcome::new(6, "coming down from infinity");
    let desk = lab.desk.clone();
    let eps = desk.eps_min();
    for lambda in [1.0, 4.0, 16.0] {
        let lambda_eps = desk.params(lambda, eps)?.lambda_eps();
        let acc = lab.ensemble(lambda, eps)?;
        for &t in &desk.t_list {
            let mut c = coming_down_check(acc, t, lambda_eps)?;
            c.name = format!("lambda={lambda},{}", c.name);
            out.check(c);
        }
    }
    Ok(out)
}

pub const SIGMA_LADDER: [f64; 5] = [0.0, 0.5, 2.0, 8.0, 32.0];

pub fn sigma_lambda(lab: &mut Lab) -> Result<CriterionOutcome> {
    let mut out = CriterionOutcome::new(7, "sigma_lambda decreases");
    let desk = lab.desk.clone();
    let eps = desk.eps_min();
    for &lambda in &SIGMA_LADDER {
        lab.ensemble(lambda, eps)?;
    }
    let ladder: Vec<(f64, &EnsembleAccumulator)> = SIGMA_LADDER
        .iter()
        .map(|&l| (l, &lab.cache.iter().find(|(k, _)| *k == (l, eps)).expect("run above").1))
        .collect();
    let verdict = lambda_monotonicity(&ladder, desk.s)?;
    for (w, d) in SIGMA_LADDER.windows(2).zip(&verdict.drops) {
        out.check(Check::new(format!("drop@{}->{}", w[0], w[1]), *d, Rule::Above { bound: 0.0, z: 3.0 }));
    }
    let (last, second) = (verdict.sigma_sq[SIGMA_LADDER.len() - 1], verdict.sigma_sq[1]);
    out.exact("halved", last.value / second.value, Rule::Below { bound: 0.5, z: 0.0 });
    // Single-site predictor on the microscopic variance, which does not depend on eps.
    let v0 = covariance_init(&MollifierSpec::bump(desk.base_width * eps), &desk.grid, &[0, 0, 0])?
        * eps.powi(desk.grid.dim() as i32);
    let pred: Vec<f64> =
        SIGMA_LADDER.iter().map(|&l| ode_layer_predictor(l, v0).map(|m| m[1][1])).collect::<Result<_>>()?;
    let same_order = pred.windows(2).zip(verdict.sigma_sq.windows(2)).all(|(p, s)| {
        (p[1] < p[0]) == (s[1].value < s[0].value)
    });
    out.exact("predictor_ordering_agrees", if same_order { 0.0 } else { 1.0 }, Rule::AtMost { bound: 0.0, z: 0.0 });
    out.notes.push(format!(
        "sigma^2 = {:?}; predictor E[Phi^2] (v0 = {v0:.4}) = {pred:.4?}",
        verdict.sigma_sq.iter().map(|e| format!("{:.4}±{:.4}", e.value, e.se_or_nan())).collect::<Vec<_>>()
    ));
    Ok(out)
}

pub fn creation_of_noise(lab: &mut Lab) -> Result<CriterionOutcome> {
    let mut out = CriterionOutcome::new(8, "creation of noise");
    let desk = lab.desk.clone();
    let (lambda, eps) = (0.25, desk.eps_min());
    let moll = MollifierSpec::bump(eps * desk.base_width);
    let acc = lab.ensemble(lambda, eps)?;
    for &t in &desk.t_list {
        let corr = cross_correlation(acc, t)?;
        out.check(Check::new(format!("correlation_above_0@t={t}"), corr, Rule::Above { bound: 0.0, z: 4.0 }));
        out.check(Check::new(format!("correlation_below_1@t={t}"), corr, Rule::Below { bound: 1.0, z: 4.0 }));
        let bound = free_point_covariance(&desk.grid, &moll, t, &[0, 0, 0])?;
        let cross = pointwise_cross_moment(acc, t)?;
        out.check(Check::new(format!("covariance_lower@t={t}"), cross, Rule::AtLeast { bound, z: 3.0 }));
        let upper = Rule::AtMost { bound, z: 3.0 }.verdict(&cross);
        out.notes.push(format!(
            "t={t}: E[u X] = {:.5e} ± {:.1e}, |p_t*rho|^2 = {bound:.5e}, upper bound holds: {upper}",
            cross.value,
            cross.se_or_nan()
        ));
    }
    Ok(out)
}

pub fn third_chaos(lab: &mut Lab) -> Result<CriterionOutcome> {
    let mut out = CriterionOutcome::new(9, "third-chaos lower bound");
    let desk = lab.desk.clone();
    let (t, lambda) = (desk.wick_t, 1.0);
    let d = desk.grid.dim() as i32;
    let mut scaled = Vec::new();
    for &eps in &desk.eps_ladder {
        let moll = MollifierSpec::bump(eps * desk.base_width);
        let q = pi3_refined(eps, t, lambda, &moll, &desk.grid)?;
        scaled.push(q.value * t.powf(d as f64 / 2.0));
        out.exact(format!("pi3_positive@eps={eps}"), q.value, Rule::Above { bound: 0.0, z: 0.0 });
    }
    let (lo, hi) = scaled.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    out.exact("pi3_spread_across_eps", (hi - lo) / hi, Rule::Below { bound: 0.25, z: 0.0 });
    out.notes.push(format!("pi3 t^(d/2) along eps ladder {:?}: {scaled:?}", desk.eps_ladder));

    let eps = desk.eps_min();
    let moll = MollifierSpec::bump(eps * desk.base_width);
    let plan = WickPlan::resolved(&desk.grid, &moll, eps, t)?;
    let exact = lambda * lambda * plan.wick_energy();
    let acc = lab.ensemble(0.0, eps)?;
    let i = name_index(acc, Observable::WickEnergy { t })?;
    let mc = acc.estimate(|m| lambda * lambda * m.mean(i) / exact);
    out.check(Check::new("wick_energy_monte_carlo", mc, Rule::Near { target: 1.0, z: 3.0 }));
    out.notes.push(format!(
        "probe mesh {} nodes: 6 sum w w K = {exact:.4e}; refined value {:.4e}",
        plan.steps(),
        scaled.last().copied().unwrap_or(f64::NAN) / t.powf(d as f64 / 2.0)
    ));
    Ok(out)
}

pub fn decorrelation(lab: &mut Lab) -> Result<CriterionOutcome> {
    let mut out = CriterionOutcome::new(10, "decorrelation");
    let desk = lab.desk.clone();
    let acc = lab.ensemble(1.0, desk.eps_min())?;
    let prof =
        decorrelation_test(acc, desk.decorrelation_t, desk.decorrelation_p, &desk.lags(), desk.grid.spacing())?;
    out.exact("slope_negative", prof.slope.unwrap_or(f64::NAN), Rule::Below { bound: 0.0, z: 0.0 });
    out.exact("fitted_c_finite", prof.fitted_c.filter(|c| c.is_finite()).map_or(1.0, |_| 0.0), Rule::AtMost {
        bound: 0.0,
        z: 0.0,
    });
    out.exact("far_offsets_present", prof.far_points as f64, Rule::AtLeast { bound: 1.0, z: 0.0 });
    for (r, c) in prof.offsets.iter().zip(&prof.covariances) {
        if *r >= 6.0 * desk.decorrelation_t.sqrt() {
            out.check(Check::new(format!("far_covariance@r={r}"), *c, Rule::Near { target: 0.0, z: 3.0 }));
        }
    }
    out.notes.push(format!("slope {:?}, fitted C {:?}", prof.slope, prof.fitted_c));
    Ok(out)
}

/// Number of perfect matchings of `0..2k`, by explicit recursion.
pub fn enumerate_pairings(k: usize) -> u64 {
    fn count(rest: &mut Vec<usize>) -> u64 {
        if rest.is_empty() {
            return 1;
        }
        let first = rest.remove(0);
        let mut total = 0;
        for j in 0..rest.len() {
            let partner = rest.remove(j);
            total += count(rest);
            rest.insert(j, partner);
        }
        rest.insert(0, first);
        total
    }
    count(&mut (0..2 * k).collect())
}

pub fn clt_oracle(desk: &Desk) -> Result<CriterionOutcome> {
    let mut out = CriterionOutcome::new(11, "CLT oracle");
    for k in 1..=5u32 {
        let diff = pairing_count(k)? as f64 - enumerate_pairings(k as usize) as f64;
        out.exact(format!("pairing_count_k={k}"), diff, Rule::Near { target: 0.0, z: 0.0 });
    }
    let spec = SyntheticFieldSpec::new(desk.grid, desk.base_width, Transform::OdeFlow { lambda: desk.synthetic_lambda });
    let phi = desk.phi.build(&desk.grid)?;
    let ens = EnsembleSpec { n_replicas: desk.synthetic_replicas, ..desk.ensemble_spec() };
    let table = clt_moment_test(&spec, &phi, &desk.eps_ladder, 4, &ens, desk.z)?;
    let eps = desk.eps_min();
    for row in table.rows_at(eps) {
        out.check(row.check.clone());
    }
    out.notes.push(format!("worst |z| along eps ladder: {:.2?}", table.worst_z()));
    Ok(out)
}

pub fn reproducibility(desk: &Desk) -> Result<CriterionOutcome> {
    let mut out = CriterionOutcome::new(12, "reproducibility");
    let eps = desk.eps_ladder[0];
    let params = desk.params(1.0, eps)?;
    let probe = Probe::new(&params, desk.registry(1.0, eps))?;
    let spec = EnsembleSpec { n_replicas: 96, ..desk.ensemble_spec() };
    let table = |acc: &EnsembleAccumulator| -> Result<String> {
        Ok(checks_to_csv(&gaussianity_checks(acc, desk.t_max(), desk.z)?))
    };
    let a = run_replicas(&params, &probe, &spec, 0..96)?;
    let b = run_replicas(&params, &probe, &spec, 0..96)?;
    out.exact("same_seed_same_bytes", if table(&a)? == table(&b)? { 0.0 } else { 1.0 }, Rule::AtMost {
        bound: 0.0,
        z: 0.0,
    });
    let wide = run_replicas(&params, &probe, &EnsembleSpec { workers: 3, ..spec }, 0..96)?;
    out.exact("worker_invariance", max_estimate_gap(&a, &wide), Rule::AtMost { bound: 1e-12, z: 0.0 });
    let parts: Vec<EnsembleAccumulator> =
        [0..32, 32..64, 64..96].into_iter().map(|r| run_replicas(&params, &probe, &spec, r)).collect::<Result<_>>()?;
    let mut left = parts[0].clone();
    left.merge(&parts[1])?;
    left.merge(&parts[2])?;
    let mut right = parts[1].clone();
    right.merge(&parts[2])?;
    let mut right_first = parts[0].clone();
    right_first.merge(&right)?;
    out.exact("merge_associative", max_estimate_gap(&left, &right_first), Rule::AtMost { bound: 1e-12, z: 0.0 });
    out.exact("merge_matches_single_run", max_estimate_gap(&left, &a), Rule::AtMost { bound: 1e-12, z: 0.0 });
    Ok(out)
}

/// Largest relative gap between means and variances of two accumulators.
fn max_estimate_gap(a: &EnsembleAccumulator, b: &EnsembleAccumulator) -> f64 {
    (0..a.names().len())
        .flat_map(|i| {
            let pa = [a.estimate(|m| m.mean(i)).value, a.estimate(|m| m.variance(i)).value];
            let pb = [b.estimate(|m| m.mean(i)).value, b.estimate(|m| m.variance(i)).value];
            pa.into_iter().zip(pb).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-300))
        })
        .fold(0.0, f64::max)
}

/// Checks of a named ensemble suite on an accumulator built from `registry_for_suites`.
pub fn ensemble_suite(name: &str, acc: &EnsembleAccumulator, params: &SimParams, cfg: &RunConfig) -> Result<Vec<Check>> {
    let grid = params.grid;
    let mut out = Vec::new();
    match name {
        "gaussianity" => {
            for &t in &params.t_list {
                out.extend(gaussianity_checks(acc, t, crate::stats::report::DEFAULT_Z)?);
            }
        }
        "coming-down" => {
            for &t in &params.t_list {
                out.push(coming_down_check(acc, t, params.lambda_eps())?);
            }
        }
        "calibration" => {
            if params.lambda != 0.0 {
                return Err(Error::Config("suite `calibration` needs lambda = 0".into()));
            }
            let phi = cfg.phi_spec().build(&grid)?;
            for &t in &params.t_list {
                let i = name_index(acc, Observable::Pairing { t })?;
                let exact = free_pairing_variance(&grid, &params.mollifier(), t, phi.field())?;
                out.push(Check::new(format!("variance@t={t}"), acc.estimate(|m| m.variance(i) / exact), Rule::Near {
                    target: 1.0,
                    z: 3.0,
                }));
            }
        }
        other => {
            check_suite_name(other)?;
            return Err(Error::Config(format!("suite `{other}` is not an ensemble suite")));
        }
    }
    Ok(out)
}

/// The observables a plain ensemble run records.
pub fn registry_for_suites(cfg: &RunConfig) -> Registry {
    let mut reg = Registry::new(cfg.phi_spec(), vec![]);
    for &t in &cfg.sim.t_list {
        reg.add_pair(Observable::Pairing { t }, Observable::FreePairing { t });
        reg.add(Observable::SecondMoment { t });
    }
    for &s in &cfg.sim.s_ladder {
        reg.add(Observable::SpatialAverage { s });
    }
    reg
}

/// Runs a suite that needs no configured ensemble.
pub fn run_standalone(name: &str, desk: Desk) -> Result<Vec<CriterionOutcome>> {
    check_suite_name(name)?;
    match name {
        "deterministic" => {
            let mut det = deterministic_propagators()?;
            for k in 1..=5u32 {
                det.exact(
                    format!("pairing_count_k={k}"),
                    pairing_count(k)? as f64 - enumerate_pairings(k as usize) as f64,
                    Rule::Near { target: 0.0, z: 0.0 },
                );
            }
            Ok(vec![det])
        }
        "clt-desk" => {
            let mut lab = Lab::new(desk);
            (1..=12).map(|id| lab.run(id)).collect()
        }
        other => Err(Error::Config(format!("suite `{other}` needs an ensemble; use the ensemble command"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_suite_passes() {
        let out = deterministic_propagators().unwrap();
        for c in &out.checks {
            assert!(c.pass, "{} = {:?}", c.name, c.estimate);
        }
        assert!(out.line().contains("PASS"));
    }

    #[test]
    fn unknown_suites_list_the_known_ones() {
        let err = check_suite_name("gausianity").unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("clt-desk"));
    }

    #[test]
    fn pairing_enumeration_small_cases() {
        assert_eq!(enumerate_pairings(1), 1);
        assert_eq!(enumerate_pairings(2), 3);
        assert_eq!(enumerate_pairings(3), 15);
    }

    #[test]
    fn desk_registry_is_shared_across_couplings() {
        let desk = Desk::standard();
        let a = desk.registry(1.0, 0.1);
        let b = desk.registry(0.0, 0.1);
        assert_eq!(b.observables.len(), a.observables.len() + 1);
        assert!(desk.registry(1.0, 0.4).observables.len() < a.observables.len());
        assert_eq!(desk.params(1.0, 0.4).unwrap().s_max, 0);
    }
}
