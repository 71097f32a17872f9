//! First- and third-chaos projections.
//!
//! The first chaos is read off in a real orthonormal Fourier basis of the
//! lattice, truncated to modes where the test function has weight; the third
//! chaos along the Wick-cube direction of the first Picard iterate.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::accumulator::{EnsembleAccumulator, Estimate};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::mollifier::{covariance_field, MollifierSpec};
use crate::spectral::{with_spectral, Spectral};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum Part {
    Cos,
    Sin,
    /// Self-conjugate mode: `cos(k.x)` is `±1` on the lattice.
    Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BasisEntry {
    index: usize,
    partner: Option<usize>,
    part: Part,
}

/// Orthonormal (in `h^d sum`) cosine/sine modes retained for the first-chaos kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstChaosBasis {
    grid: GridSpec,
    entries: Vec<BasisEntry>,
}

impl FirstChaosBasis {
    /// Keeps every mode where `|phi^(k)| >= rel_cutoff * max |phi^|`.
    ///
    /// The kernel of `<u(t), phi>` is `phi` convolved with a nonnegative
    /// function of mass at most one, so its Fourier weight is dominated by
    /// that of `phi` and the dropped energy is at most the dropped `|phi^|^2`.
    pub fn for_test_function(phi: &ScalarField, rel_cutoff: f64) -> Self {
        let grid = *phi.grid();
        with_spectral(&grid, |ws| {
            let spec = ws.transform(phi);
            let max = spec.iter().map(|c| c.norm()).fold(0.0, f64::max);
            let keep: Vec<usize> = (0..spec.len()).filter(|&i| spec[i].norm() >= rel_cutoff * max).collect();
            Self::from_indices(ws, &keep)
        })
    }

    /// Every lattice mode; the basis is then complete.
    pub fn complete(grid: &GridSpec) -> Self {
        with_spectral(grid, |ws| {
            let all: Vec<usize> = (0..ws.spectrum_len()).collect();
            Self::from_indices(ws, &all)
        })
    }

    fn from_indices(ws: &Spectral, indices: &[usize]) -> Self {
        let grid = *ws.grid();
        let n = grid.points_per_side() as i64;
        let d = grid.dim();
        let nyquist = (n / 2) as usize;
        let mut entries = Vec::new();
        for &i in indices {
            let m = ws.modes(i);
            let last = m[d - 1] as usize;
            if last != 0 && last != nyquist {
                entries.push(BasisEntry { index: i, partner: None, part: Part::Cos });
                entries.push(BasisEntry { index: i, partner: None, part: Part::Sin });
                continue;
            }
            let own: Vec<i64> = m[..d - 1].iter().map(|x| x.rem_euclid(n)).collect();
            let conj: Vec<i64> = m[..d - 1].iter().map(|x| (-x).rem_euclid(n)).collect();
            if own == conj {
                entries.push(BasisEntry { index: i, partner: None, part: Part::Real });
            } else if own < conj {
                let neg: Vec<i64> = m[..d].iter().map(|x| -x).collect();
                let partner = ws.index_of_modes(&neg);
                entries.push(BasisEntry { index: i, partner, part: Part::Cos });
                entries.push(BasisEntry { index: i, partner, part: Part::Sin });
            }
        }
        Self { grid, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn scale(&self, part: Part) -> f64 {
        let vol = self.grid.volume();
        match part {
            Part::Real => 1.0 / vol.sqrt(),
            _ => (2.0 / vol).sqrt(),
        }
    }

    /// `h^d sum_y f(y) e_j(y)` for every retained basis function.
    pub fn coefficients(&self, ws: &mut Spectral, f: &ScalarField) -> Vec<f64> {
        let spec = ws.transform(f);
        self.coefficients_of_spectrum(&spec)
    }

    pub fn coefficients_of_spectrum(&self, spec: &[Complex64]) -> Vec<f64> {
        let dv = self.grid.cell_volume();
        self.entries
            .iter()
            .map(|e| {
                let c = spec[e.index];
                let v = match e.part {
                    Part::Cos | Part::Real => c.re,
                    Part::Sin => -c.im,
                };
                dv * self.scale(e.part) * v
            })
            .collect()
    }

    /// `sum_j c_j e_j` as a lattice field.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<ScalarField> {
        if coeffs.len() != self.entries.len() {
            return Err(Error::InvalidParam("coefficient count does not match the basis".into()));
        }
        let big_n = self.grid.len() as f64;
        with_spectral(&self.grid, |ws| {
            let mut spec = vec![Complex64::default(); ws.spectrum_len()];
            for (e, &c) in self.entries.iter().zip(coeffs) {
                let z = match e.part {
                    Part::Real => Complex64::new(big_n * self.scale(e.part) * c, 0.0),
                    Part::Cos => Complex64::new(0.5 * big_n * self.scale(e.part) * c, 0.0),
                    Part::Sin => Complex64::new(0.0, -0.5 * big_n * self.scale(e.part) * c),
                };
                spec[e.index] += z;
                if let Some(p) = e.partner {
                    spec[p] += z.conj();
                }
            }
            Ok(ws.synthesize(spec, 0.0))
        })
    }
}

/// Time nodes and weights for the Wick-cube statistic
/// `W(t) = eps^{d-2} int_0^t p_{t-s} * (X^3 - 3 c(s) X)(s) ds`,
/// where `c(s) = E[X(s,0)^2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WickPlan {
    pub t: f64,
    pub nodes: Vec<f64>,
    /// Trapezoid weights times `eps^{d-2}`.
    pub weights: Vec<f64>,
    /// `c(s_i)`.
    pub variances: Vec<f64>,
    /// Spectrum of the initial covariance `rho * rho~`.
    cov_spectrum: Vec<Complex64>,
    grid: GridSpec,
}

/// Refinement level used by ensemble probes.
pub const WICK_PROBE_LEVEL: u32 = 1;

impl WickPlan {
    /// Largest admissible node spacing: half the squared mollifier width.
    pub fn max_step(moll: &MollifierSpec) -> f64 {
        0.5 * moll.width * moll.width
    }

    /// The graded mesh used by ensemble probes.
    pub fn resolved(grid: &GridSpec, moll: &MollifierSpec, eps: f64, t: f64) -> Result<Self> {
        Self::graded(grid, moll, eps, t, WICK_PROBE_LEVEL)
    }

    /// Uniform nodes `i t / steps`.
    pub fn with_steps(grid: &GridSpec, moll: &MollifierSpec, eps: f64, t: f64, steps: usize) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) || steps == 0 {
            return Err(Error::InvalidParam(format!("Wick plan needs t > 0 and steps > 0, got t = {t}")));
        }
        let step = t / steps as f64;
        let limit = Self::max_step(moll);
        if step > limit * (1.0 + 1e-12) {
            return Err(Error::QuadratureUnderResolved { step, limit });
        }
        let nodes: Vec<f64> = (0..=steps).map(|i| i as f64 * step).collect();
        Self::from_nodes(grid, moll, eps, t, nodes)
    }

    /// Step `w^2 / 2^{level+1}` on `[0, 4 w^2]`, growing like `s^2` beyond.
    /// The integrand lives mostly within a few `w^2` of the origin, where the
    /// mesh stays uniform.
    pub fn graded(grid: &GridSpec, moll: &MollifierSpec, eps: f64, t: f64, level: u32) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParam(format!("Wick plan needs t > 0, got t = {t}")));
        }
        let knee = 4.0 * moll.width * moll.width;
        let fine = 0.125 * knee / 2f64.powi(level as i32 + 1);
        let mut nodes = vec![0.0];
        loop {
            let last = *nodes.last().expect("non-empty");
            let step = fine * (last / knee).max(1.0).powi(2);
            if last + 1.5 * step >= t {
                nodes.push(t);
                break;
            }
            nodes.push(last + step);
        }
        Self::from_nodes(grid, moll, eps, t, nodes)
    }

    fn from_nodes(grid: &GridSpec, moll: &MollifierSpec, eps: f64, t: f64, nodes: Vec<f64>) -> Result<Self> {
        let scale = eps.powi(grid.dim() as i32 - 2);
        let m = nodes.len() - 1;
        let weights = (0..=m)
            .map(|i| {
                let left = if i > 0 { nodes[i] - nodes[i - 1] } else { 0.0 };
                let right = if i < m { nodes[i + 1] - nodes[i] } else { 0.0 };
                0.5 * (left + right) * scale
            })
            .collect();
        let cov = covariance_field(moll, grid)?;
        with_spectral(grid, |ws| {
            let cov_spectrum = ws.transform(&cov);
            let variances = nodes.iter().map(|&s| ws.origin_value(&cov_spectrum, |k2| (-2.0 * s * k2).exp())).collect();
            Ok(Self { t, nodes, weights, variances, cov_spectrum, grid: *grid })
        })
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    /// `W(t)` for one replica given the spectrum of its initial field.
    pub fn wick_field(&self, ws: &mut Spectral, u0_spectrum: &[Complex64]) -> ScalarField {
        let len = ws.spectrum_len();
        let k2 = ws.wavenumbers_squared().to_vec();
        let mut acc = vec![Complex64::default(); len];
        let mut spec = vec![Complex64::default(); len];
        let mut x = vec![0.0; self.grid.len()];
        for ((&s, &w), &c) in self.nodes.iter().zip(&self.weights).zip(&self.variances) {
            for ((dst, src), &k) in spec.iter_mut().zip(u0_spectrum).zip(&k2) {
                *dst = *src * (-s * k).exp();
            }
            ws.inverse(&mut spec, &mut x);
            for v in x.iter_mut() {
                *v = *v * (*v * *v - 3.0 * c);
            }
            ws.forward(&x, &mut spec);
            let lag = self.t - s;
            for ((a, b), &k) in acc.iter_mut().zip(&spec).zip(&k2) {
                *a += *b * (w * (-lag * k).exp());
            }
        }
        let mut out = vec![0.0; self.grid.len()];
        ws.inverse(&mut acc, &mut out);
        ScalarField::from_values(self.grid, out, self.t).expect("length matches grid")
    }

    /// `E[W(t,x)^2]` on the same nodes:
    /// `6 sum_ij w_i w_j (p_{2t - s_i - s_j} * (p_{s_i + s_j} * C)^3)(0)`.
    pub fn wick_energy(&self) -> f64 {
        // The kernel depends on i, j only through s_i + s_j; evaluate it once per distinct sum.
        let mut sums: Vec<f64> = Vec::new();
        for (i, a) in self.nodes.iter().enumerate() {
            for b in &self.nodes[i..] {
                sums.push(a + b);
            }
        }
        sums.sort_by(f64::total_cmp);
        let tol = 1e-12 * self.t;
        sums.dedup_by(|a, b| (*a - *b).abs() <= tol);
        with_spectral(&self.grid, |ws| {
            let len = ws.spectrum_len();
            let k2 = ws.wavenumbers_squared().to_vec();
            let mut spec = vec![Complex64::default(); len];
            let mut field = vec![0.0; self.grid.len()];
            let kernel: Vec<f64> = sums
                .iter()
                .map(|&r| {
                    for ((dst, src), &k) in spec.iter_mut().zip(&self.cov_spectrum).zip(&k2) {
                        *dst = *src * (-r * k).exp();
                    }
                    ws.inverse(&mut spec, &mut field);
                    field.iter_mut().for_each(|v| *v = v.powi(3));
                    ws.forward(&field, &mut spec);
                    ws.origin_value(&spec, |k| (-(2.0 * self.t - r) * k).exp())
                })
                .collect();
            let lookup = |r: f64| {
                let i = sums.partition_point(|&x| x < r - tol);
                kernel[i]
            };
            let mut total = 0.0;
            for (i, (a, wi)) in self.nodes.iter().zip(&self.weights).enumerate() {
                for (b, wj) in self.nodes[i..].iter().zip(&self.weights[i..]) {
                    let mult = if *b == *a { 1.0 } else { 2.0 };
                    total += mult * wi * wj * lookup(a + b);
                }
            }
            6.0 * total
        })
    }
}

/// `λ^2 E[|Π₃ N(X,X,X)(t,x)|^2]`. See [`pi3_refined`].
pub fn pi3_lower_bound(eps: f64, t: f64, lambda: f64, moll: &MollifierSpec, grid: &GridSpec) -> Result<f64> {
    Ok(pi3_refined(eps, t, lambda, moll, grid)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pi3Quadrature {
    pub value: f64,
    /// Node count of the finest mesh used.
    pub steps: usize,
    pub rel_change: f64,
}

pub const PI3_MAX_LEVEL: u32 = 6;

/// Trapezoid values on graded meshes of increasing level, Richardson
/// extrapolated in pairs (the error is second order in the fine step) until
/// two successive extrapolations agree to `1e-3` relative.
pub fn pi3_refined(eps: f64, t: f64, lambda: f64, moll: &MollifierSpec, grid: &GridSpec) -> Result<Pi3Quadrature> {
    let mut coarse = WickPlan::graded(grid, moll, eps, t, 0)?.wick_energy();
    let mut prev: Option<f64> = None;
    for level in 1..=PI3_MAX_LEVEL {
        let plan = WickPlan::graded(grid, moll, eps, t, level)?;
        let fine = plan.wick_energy();
        let extrapolated = fine + (fine - coarse) / 3.0;
        coarse = fine;
        if let Some(p) = prev {
            let rel_change = ((extrapolated - p) / extrapolated).abs();
            if rel_change < 1e-3 || level == PI3_MAX_LEVEL {
                return Ok(Pi3Quadrature { value: lambda * lambda * extrapolated, steps: plan.steps(), rel_change });
            }
        }
        prev = Some(extrapolated);
    }
    unreachable!("the loop returns at the last level")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosProjection {
    pub total_variance: Estimate,
    pub chaos1: Estimate,
    pub chaos3: Estimate,
    pub residual: Estimate,
}

/// Splits `Var(F)` into first-chaos energy, the energy along the third-chaos
/// direction `G`, and the remainder.
pub fn chaos_project(acc: &EnsembleAccumulator, f: usize, g: Option<usize>) -> Result<ChaosProjection> {
    if acc.kernel_source() != Some(f) {
        return Err(Error::NoiseNotStored);
    }
    let c3 = |m: &super::accumulator::Moments| match g {
        Some(g) => m.raw_cross(f, g).powi(2) / m.raw(g, 2),
        None => 0.0,
    };
    Ok(ChaosProjection {
        total_variance: acc.estimate(|m| m.variance(f)),
        chaos1: acc.estimate(|m| m.kernel_energy()),
        chaos3: acc.estimate(c3),
        residual: acc.estimate(|m| m.variance(f) - m.kernel_energy() - c3(m)),
    })
}

/// Estimated first-chaos kernel `y -> E[F xi_y]` of the kernel source.
pub fn first_chaos_kernel(acc: &EnsembleAccumulator, basis: &FirstChaosBasis) -> Result<ScalarField> {
    if acc.kernel_source().is_none() {
        return Err(Error::NoiseNotStored);
    }
    basis.synthesize(&acc.kernel_coefficients())
}
