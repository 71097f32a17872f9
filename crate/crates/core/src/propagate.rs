//! Time integration of `du = Δu - λu³` on the torus.
//!
//! The heat part is applied exactly in Fourier space and the reaction part
//! by its closed-form flow `u / sqrt(1 + 2λt u²)`. Strang composition of the
//! two is second order in the step and unconditionally stable.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::spectral::{with_spectral, Spectral};

/// Step-size policy and optional safeguards for [`solve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepScheme {
    pub dt: f64,
    /// Clamp `|u| <= R` after every reaction sub-step. Diagnostic only.
    #[serde(default)]
    pub truncation: Option<f64>,
    /// Zero modes above two thirds of the Nyquist index after every heat sub-step.
    #[serde(default)]
    pub dealias: bool,
}

impl StepScheme {
    pub fn new(dt: f64) -> Self {
        Self { dt, truncation: None, dealias: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParam(format!("time step {} must be positive", self.dt)));
        }
        if let Some(r) = self.truncation {
            if r.is_nan() || r <= 0.0 {
                return Err(Error::InvalidParam(format!("truncation level {r} must be positive")));
            }
        }
        Ok(())
    }

    /// Number of equal sub-steps used to cross an interval of length `span`.
    pub fn substeps(&self, span: f64) -> usize {
        ((span / self.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }
}

pub fn heat_propagate(f: &ScalarField, t: f64) -> Result<ScalarField> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidParam(format!("heat time {t} must be nonnegative")));
    }
    if !f.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    if t == 0.0 {
        return Ok(f.clone());
    }
    let out = with_spectral(f.grid(), |ws| ws.apply_multiplier(f, |k2| (-k2 * t).exp()));
    Ok(out.with_time(f.time() + t))
}

/// Closed-form flow of `du/dt = -λu³` over time `t`.
#[inline]
pub fn cubic_flow_value(u0: f64, lambda: f64, t: f64) -> f64 {
    u0 / (1.0 + 2.0 * lambda * t * u0 * u0).sqrt()
}

pub fn cubic_flow(f: &ScalarField, lambda: f64, t: f64) -> ScalarField {
    let coef = 2.0 * lambda * t;
    f.map(|u| u / (1.0 + coef * u * u).sqrt()).with_time(f.time() + t)
}

/// One Strang step `H(dt/2) ∘ C(dt) ∘ H(dt/2)`.
pub fn strang_step(f: &ScalarField, lambda: f64, dt: f64) -> Result<ScalarField> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParam(format!("time step {dt} must be positive")));
    }
    let half = heat_propagate(f, 0.5 * dt)?;
    let reacted = cubic_flow(&half, lambda, dt);
    let mut out = heat_propagate(&reacted.with_time(half.time()), 0.5 * dt)?;
    out.set_time(f.time() + dt);
    Ok(out)
}

/// Splitting integrator owning its transform workspace.
#[derive(Debug, Clone)]
pub struct Solver {
    ws: Spectral,
    lambda: f64,
    scheme: StepScheme,
    mask: Option<Vec<f64>>,
    spec: Vec<Complex64>,
    steps_taken: usize,
}

impl Solver {
    pub fn new(grid: GridSpec, lambda: f64, scheme: StepScheme) -> Result<Self> {
        scheme.validate()?;
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidParam(format!("coupling {lambda} must be nonnegative")));
        }
        let ws = Spectral::new(grid);
        let mask = scheme.dealias.then(|| {
            let n = grid.points_per_side() as i64;
            (0..ws.spectrum_len())
                .map(|i| {
                    let m = ws.modes(i);
                    if m[..grid.dim()].iter().all(|&mj| 3 * mj.abs() <= n) {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        });
        Ok(Self { ws, lambda, scheme, mask, spec: Vec::new(), steps_taken: 0 })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn scheme(&self) -> &StepScheme {
        &self.scheme
    }

    pub fn workspace(&mut self) -> &mut Spectral {
        &mut self.ws
    }

    fn heat(&mut self, values: &mut [f64], t: f64) {
        if t <= 0.0 && self.mask.is_none() {
            return;
        }
        self.spec.resize(self.ws.spectrum_len(), Complex64::default());
        self.ws.forward(values, &mut self.spec);
        let k2 = self.ws.wavenumbers_squared();
        match &self.mask {
            Some(mask) => {
                for ((c, &k), &m) in self.spec.iter_mut().zip(k2).zip(mask) {
                    *c *= m * (-k * t).exp();
                }
            }
            None => {
                for (c, &k) in self.spec.iter_mut().zip(k2) {
                    *c *= (-k * t).exp();
                }
            }
        }
        self.ws.inverse(&mut self.spec, values);
    }

    fn react(&self, values: &mut [f64], tau: f64) {
        let coef = 2.0 * self.lambda * tau;
        match self.scheme.truncation {
            Some(r) => {
                for u in values.iter_mut() {
                    *u = (*u / (1.0 + coef * *u * *u).sqrt()).clamp(-r, r);
                }
            }
            None => {
                for u in values.iter_mut() {
                    *u /= (1.0 + coef * *u * *u).sqrt();
                }
            }
        }
    }

    /// Advances `values` across `span` using equal Strang steps no longer
    /// than the scheme step. Consecutive heat half-steps are fused.
    pub fn advance(&mut self, values: &mut [f64], span: f64) -> Result<()> {
        if span <= 0.0 {
            return Ok(());
        }
        if self.lambda == 0.0 && self.scheme.truncation.is_none() {
            self.heat(values, span);
            self.steps_taken += 1;
            return self.check(values);
        }
        let m = self.scheme.substeps(span);
        let tau = span / m as f64;
        self.heat(values, 0.5 * tau);
        for k in 0..m {
            self.react(values, tau);
            let next = if k + 1 == m { 0.5 * tau } else { tau };
            self.heat(values, next);
            self.steps_taken += 1;
            self.check(values)?;
        }
        Ok(())
    }

    fn check(&self, values: &[f64]) -> Result<()> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            let max_abs = values.iter().filter(|v| v.is_finite()).fold(0.0f64, |m, v| m.max(v.abs()));
            Err(Error::NonFiniteState { step: self.steps_taken, max_abs })
        }
    }

    /// Snapshots of the solution at each requested time (ascending, `>= f0.time()`).
    pub fn solve(&mut self, f0: &ScalarField, times: &[f64]) -> Result<Vec<ScalarField>> {
        if f0.grid() != self.ws.grid() {
            return Err(Error::GridMismatch);
        }
        if !f0.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        check_times(f0.time(), times)?;
        self.steps_taken = 0;
        let mut values = f0.values().to_vec();
        let mut now = f0.time();
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            self.advance(&mut values, t - now)?;
            now = t;
            out.push(ScalarField::from_values(*f0.grid(), values.clone(), t)?);
        }
        Ok(out)
    }
}

fn check_times(start: f64, times: &[f64]) -> Result<()> {
    let mut prev = start;
    for &t in times {
        if !(t.is_finite() && t >= prev) {
            return Err(Error::InvalidParam(format!("snapshot times must ascend from {start}; got {t} after {prev}")));
        }
        prev = t;
    }
    Ok(())
}

pub fn solve(f0: &ScalarField, lambda: f64, scheme: &StepScheme, times: &[f64]) -> Result<Vec<ScalarField>> {
    Solver::new(*f0.grid(), lambda, *scheme)?.solve(f0, times)
}

/// Every intermediate step time the solver visits on `[start, end]`,
/// including both endpoints, when it lands on each of `marks`.
pub fn dense_times(scheme: &StepScheme, start: f64, marks: &[f64]) -> Vec<f64> {
    let mut out = vec![start];
    let mut now = start;
    for &t in marks {
        if t <= now {
            continue;
        }
        let m = scheme.substeps(t - now);
        for k in 1..m {
            out.push(now + (t - now) * k as f64 / m as f64);
        }
        out.push(t);
        now = t;
    }
    out
}

/// Tangent evolution `dv = Δv - 3λu²v` along a stored trajectory.
///
/// Each interval `[t_i, t_{i+1}]` is crossed with the derivative of the Strang
/// step the solver takes: heat half-step, multiplication by the exact
/// reaction-flow derivative `(1 + 2λτw²)^{-3/2} = exp(-3λ∫u²)` with `w` the
/// half-step state, heat half-step. Returns `v` at the last trajectory time.
pub fn linearized_solve(u_traj: &[ScalarField], v0: &ScalarField, lambda: f64, scheme: &StepScheme) -> Result<ScalarField> {
    scheme.validate()?;
    let first = u_traj.first().ok_or(Error::InsufficientSnapshots { from: 0.0, to: 0.0 })?;
    v0.check_grid(first)?;
    if !v0.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    for pair in u_traj.windows(2) {
        let spacing = pair[1].time() - pair[0].time();
        if spacing > scheme.dt * (1.0 + 1e-9) {
            return Err(Error::TrajectoryTooCoarse { spacing, dt: scheme.dt });
        }
        if spacing < 0.0 {
            return Err(Error::InvalidParam("trajectory times must ascend".into()));
        }
    }
    let grid = *v0.grid();
    with_spectral(&grid, |ws| {
        let mut v = v0.values().to_vec();
        let mut w = Vec::with_capacity(v.len());
        let mut spec = Vec::new();
        for pair in u_traj.windows(2) {
            let tau = pair[1].time() - pair[0].time();
            if tau == 0.0 {
                continue;
            }
            ws.heat_in_place(&mut v, 0.5 * tau, &mut spec);
            if lambda > 0.0 {
                w.clear();
                w.extend_from_slice(pair[0].values());
                ws.heat_in_place(&mut w, 0.5 * tau, &mut spec);
                let coef = 2.0 * lambda * tau;
                for (vi, &wi) in v.iter_mut().zip(&w) {
                    *vi *= (1.0 + coef * wi * wi).powf(-1.5);
                }
            }
            ws.heat_in_place(&mut v, 0.5 * tau, &mut spec);
        }
        let t_end = u_traj.last().map(|s| s.time()).unwrap_or(0.0);
        ScalarField::from_values(grid, v, t_end)
    })
}

/// Sup-norm of `u(T) - p_{T-t} * u(t) + λ ∫_t^T p_{T-s} * u(s)³ ds`, the
/// integral taken by the trapezoid rule over the stored snapshots in `[t, T]`.
pub fn mild_residual(traj: &[ScalarField], lambda: f64, t: f64, t_end: f64) -> Result<f64> {
    let tol = 1e-9 * t_end.abs().max(1.0);
    let window: Vec<&ScalarField> = traj
        .iter()
        .filter(|s| s.time() >= t - tol && s.time() <= t_end + tol)
        .collect();
    if window.len() < 2
        || (window[0].time() - t).abs() > tol
        || (window[window.len() - 1].time() - t_end).abs() > tol
    {
        return Err(Error::InsufficientSnapshots { from: t, to: t_end });
    }
    let grid = *window[0].grid();
    for s in &window {
        if s.grid() != &grid {
            return Err(Error::GridMismatch);
        }
    }
    with_spectral(&grid, |ws| {
        let len = ws.spectrum_len();
        let k2 = ws.wavenumbers_squared().to_vec();
        let mut acc = vec![Complex64::default(); len];
        let mut spec = vec![Complex64::default(); len];
        let start = window[0];
        let end = window[window.len() - 1];
        // - p_{T-t} * u(t)
        ws.forward(start.values(), &mut spec);
        for ((a, c), &k) in acc.iter_mut().zip(&spec).zip(&k2) {
            *a -= *c * (-k * (end.time() - start.time())).exp();
        }
        // + λ Σ w_k p_{T-s_k} * u(s_k)³
        if lambda != 0.0 {
            let mut cube = vec![0.0; grid.len()];
            for (i, s) in window.iter().enumerate() {
                let left = if i > 0 { s.time() - window[i - 1].time() } else { 0.0 };
                let right = if i + 1 < window.len() { window[i + 1].time() - s.time() } else { 0.0 };
                let weight = lambda * 0.5 * (left + right);
                for (c, &u) in cube.iter_mut().zip(s.values()) {
                    *c = u * u * u;
                }
                ws.forward(&cube, &mut spec);
                let lag = end.time() - s.time();
                for ((a, c), &k) in acc.iter_mut().zip(&spec).zip(&k2) {
                    *a += *c * (weight * (-k * lag).exp());
                }
            }
        }
        let mut resid = vec![0.0; grid.len()];
        ws.inverse(&mut acc, &mut resid);
        Ok(resid
            .iter()
            .zip(end.values())
            .fold(0.0f64, |m, (r, u)| m.max((u + r).abs())))
    })
}
