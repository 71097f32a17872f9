//! Real-to-complex FFTs on the periodic lattice and Fourier multipliers.
//!
//! The half spectrum has shape `[n; d-1] x (n/2 + 1)`: the last axis is
//! transformed real-to-complex, the remaining axes complex-to-complex.
//! Every operation that needs a transform goes through a [`Spectral`]
//! workspace; one workspace belongs to one worker.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};

/// Transform plans and scratch buffers for one grid.
#[derive(Clone)]
pub struct Spectral {
    grid: GridSpec,
    half: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    k2: Arc<Vec<f64>>,
    lines: Vec<Complex64>,
    scratch: Vec<Complex64>,
    rbuf: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: GridSpec) -> Self {
        let n = grid.points_per_side();
        let half = n / 2 + 1;
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        let r2c = rp.plan_fft_forward(n);
        let c2r = rp.plan_fft_inverse(n);
        let fwd = cp.plan_fft_forward(n);
        let inv = cp.plan_fft_inverse(n);
        let scratch_len = [
            r2c.get_scratch_len(),
            c2r.get_scratch_len(),
            fwd.get_inplace_scratch_len(),
            inv.get_inplace_scratch_len(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        let k2 = Arc::new(wavenumbers_squared(&grid));
        Self {
            grid,
            half,
            r2c,
            c2r,
            fwd,
            inv,
            k2,
            lines: Vec::new(),
            scratch: vec![Complex64::default(); scratch_len],
            rbuf: vec![0.0; n],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Number of complex coefficients in the half spectrum.
    pub fn spectrum_len(&self) -> usize {
        self.grid.len() / self.grid.points_per_side() * self.half
    }

    /// `|k|^2` for every half-spectrum coefficient.
    pub fn wavenumbers_squared(&self) -> &[f64] {
        &self.k2
    }

    /// Per-axis signed mode numbers of a half-spectrum index.
    pub fn modes(&self, index: usize) -> [i64; 3] {
        mode_of(&self.grid, self.half, index)
    }

    /// Half-spectrum index of the mode `m` (taken mod n per axis), or `None`
    /// when only its conjugate is stored.
    pub fn index_of_modes(&self, m: &[i64]) -> Option<usize> {
        let n = self.grid.points_per_side() as i64;
        let d = self.grid.dim();
        let last = m[d - 1].rem_euclid(n);
        if last >= self.half as i64 {
            return None;
        }
        let row = m[..d - 1].iter().fold(0i64, |acc, &mj| acc * n + mj.rem_euclid(n));
        Some(row as usize * self.half + last as usize)
    }

    /// Value at the origin of the field whose spectrum is
    /// `spec * multiplier(|k|^2)`, summed directly over the half spectrum.
    pub fn origin_value(&self, spec: &[Complex64], multiplier: impl Fn(f64) -> f64) -> f64 {
        let nyquist = self.half - 1;
        let total: f64 = spec
            .iter()
            .zip(self.k2.iter())
            .enumerate()
            .map(|(i, (c, &k2))| {
                let j = i % self.half;
                let w = if j == 0 || j == nyquist { 1.0 } else { 2.0 };
                w * c.re * multiplier(k2)
            })
            .sum();
        total / self.grid.len() as f64
    }

    pub fn forward(&mut self, input: &[f64], out: &mut [Complex64]) {
        let n = self.grid.points_per_side();
        let rows = self.grid.len() / n;
        debug_assert_eq!(input.len(), self.grid.len());
        debug_assert_eq!(out.len(), rows * self.half);
        for r in 0..rows {
            self.rbuf.copy_from_slice(&input[r * n..(r + 1) * n]);
            self.r2c
                .process_with_scratch(&mut self.rbuf, &mut out[r * self.half..(r + 1) * self.half], &mut self.scratch)
                .expect("r2c lengths match plan");
        }
        for axis in (0..self.grid.dim().saturating_sub(1)).rev() {
            self.along_axis(out, axis, true);
        }
    }

    /// Inverse transform including the `1/n^d` normalization. Clobbers `spec`.
    pub fn inverse(&mut self, spec: &mut [Complex64], out: &mut [f64]) {
        let n = self.grid.points_per_side();
        let rows = self.grid.len() / n;
        for axis in 0..self.grid.dim().saturating_sub(1) {
            self.along_axis(spec, axis, false);
        }
        let norm = 1.0 / self.grid.len() as f64;
        for r in 0..rows {
            let row = &mut spec[r * self.half..(r + 1) * self.half];
            // The DC and Nyquist bins of a real signal are real.
            row[0].im = 0.0;
            row[self.half - 1].im = 0.0;
            self.c2r
                .process_with_scratch(row, &mut out[r * n..(r + 1) * n], &mut self.scratch)
                .expect("c2r lengths match plan");
        }
        for v in out.iter_mut() {
            *v *= norm;
        }
    }

    fn along_axis(&mut self, data: &mut [Complex64], axis: usize, forward: bool) {
        let n = self.grid.points_per_side();
        let d = self.grid.dim();
        // Shape of the half spectrum: n along axes < d-1, `half` along the last.
        let stride: usize = (axis + 1..d).map(|a| if a == d - 1 { self.half } else { n }).product();
        let outer = data.len() / (stride * n);
        let count = outer * stride;
        self.lines.resize(count * n, Complex64::default());
        for o in 0..outer {
            for s in 0..stride {
                let base = o * stride * n + s;
                let line = &mut self.lines[(o * stride + s) * n..(o * stride + s + 1) * n];
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + j * stride];
                }
            }
        }
        let plan = if forward { &self.fwd } else { &self.inv };
        plan.process_with_scratch(&mut self.lines, &mut self.scratch);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * stride * n + s;
                let line = &self.lines[(o * stride + s) * n..(o * stride + s + 1) * n];
                for (j, &v) in line.iter().enumerate() {
                    data[base + j * stride] = v;
                }
            }
        }
    }

    pub fn transform(&mut self, f: &ScalarField) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); self.spectrum_len()];
        self.forward(f.values(), &mut out);
        out
    }

    pub fn synthesize(&mut self, mut spec: Vec<Complex64>, time: f64) -> ScalarField {
        let mut values = vec![0.0; self.grid.len()];
        self.inverse(&mut spec, &mut values);
        ScalarField::from_values(self.grid, values, time).expect("length matches grid")
    }

    /// Multiplies the spectrum of `f` by `multiplier(|k|^2)` and transforms back.
    pub fn apply_multiplier(&mut self, f: &ScalarField, multiplier: impl Fn(f64) -> f64) -> ScalarField {
        let mut spec = self.transform(f);
        for (c, &k2) in spec.iter_mut().zip(self.k2.iter()) {
            *c *= multiplier(k2);
        }
        self.synthesize(spec, f.time())
    }

    /// Exact torus heat evolution `p_t * f` in place on the values.
    pub fn heat_in_place(&mut self, values: &mut [f64], t: f64, spec: &mut Vec<Complex64>) {
        spec.resize(self.spectrum_len(), Complex64::default());
        self.forward(values, spec);
        let k2 = Arc::clone(&self.k2);
        for (c, &k) in spec.iter_mut().zip(k2.iter()) {
            *c *= (-k * t).exp();
        }
        self.inverse(spec, values);
    }

    /// Lattice convolution `h^d * sum_y f(x - y) g(y)`.
    pub fn convolve(&mut self, f: &ScalarField, g: &ScalarField) -> Result<ScalarField> {
        f.check_grid(g)?;
        let mut a = self.transform(f);
        let b = self.transform(g);
        let dv = self.grid.cell_volume();
        for (x, y) in a.iter_mut().zip(&b) {
            *x *= *y * dv;
        }
        Ok(self.synthesize(a, f.time()))
    }
}

fn mode_of(grid: &GridSpec, half: usize, mut index: usize) -> [i64; 3] {
    let n = grid.points_per_side();
    let d = grid.dim();
    let mut m = [0i64; 3];
    m[d - 1] = (index % half) as i64;
    index /= half;
    for axis in (0..d - 1).rev() {
        let j = (index % n) as i64;
        index /= n;
        m[axis] = if j > n as i64 / 2 { j - n as i64 } else { j };
    }
    m
}

fn wavenumbers_squared(grid: &GridSpec) -> Vec<f64> {
    let n = grid.points_per_side();
    let half = n / 2 + 1;
    let len = grid.len() / n * half;
    let base = 2.0 * PI / grid.side();
    (0..len)
        .map(|i| {
            let m = mode_of(grid, half, i);
            m[..grid.dim()].iter().map(|&mj| (base * mj as f64).powi(2)).sum()
        })
        .collect()
}

thread_local! {
    static WORKSPACES: RefCell<HashMap<(usize, usize, u64), Spectral>> = RefCell::new(HashMap::new());
}

/// Runs `f` with this thread's cached workspace for `grid`.
pub fn with_spectral<T>(grid: &GridSpec, f: impl FnOnce(&mut Spectral) -> T) -> T {
    let key = (grid.dim(), grid.points_per_side(), grid.side().to_bits());
    let mut ws = WORKSPACES.with(|cell| cell.borrow_mut().remove(&key)).unwrap_or_else(|| Spectral::new(*grid));
    let out = f(&mut ws);
    WORKSPACES.with(|cell| cell.borrow_mut().insert(key, ws));
    out
}

/// Fourier multipliers `exp(-|k|^2 * duration)` of the torus heat semigroup.
#[derive(Debug, Clone)]
pub struct HeatSymbol {
    grid: GridSpec,
    duration: f64,
    multipliers: Vec<f64>,
}

impl HeatSymbol {
    pub fn new(grid: GridSpec, duration: f64) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidParam(format!("heat duration {duration} must be positive")));
        }
        let multipliers = wavenumbers_squared(&grid).into_iter().map(|k2| (-k2 * duration).exp()).collect();
        Ok(Self { grid, duration, multipliers })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    pub fn apply(&self, ws: &mut Spectral, f: &ScalarField) -> Result<ScalarField> {
        if f.grid() != &self.grid || ws.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let mut spec = ws.transform(f);
        for (c, &m) in spec.iter_mut().zip(&self.multipliers) {
            *c *= m;
        }
        Ok(ws.synthesize(spec, f.time() + self.duration))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_value_matches_inverse_transform() {
        for d in 1..=3 {
            let g = GridSpec::new(d, 8, 2.0).unwrap();
            let f = ScalarField::from_fn(g, |x| (x[0] * 2.0).sin() + x[d - 1] * x[0] + 0.3);
            let mut ws = Spectral::new(g);
            let spec = ws.transform(&f);
            let direct = ws.apply_multiplier(&f, |k2| (-0.1 * k2).exp()).values()[0];
            let via = ws.origin_value(&spec, |k2| (-0.1 * k2).exp());
            assert!((direct - via).abs() < 1e-13, "d = {d}");
        }
    }

    #[test]
    fn index_of_modes_round_trips() {
        let g = GridSpec::new(3, 8, 2.0).unwrap();
        let ws = Spectral::new(g);
        for i in 0..ws.spectrum_len() {
            let m = ws.modes(i);
            assert_eq!(ws.index_of_modes(&m), Some(i));
        }
        assert_eq!(ws.index_of_modes(&[0, 0, -1]), None);
    }

    fn direct_dft_mode(f: &ScalarField, m: [i64; 3]) -> Complex64 {
        let g = f.grid();
        let n = g.points_per_side() as f64;
        f.values()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = g.coords(i);
                let phase: f64 = (0..g.dim()).map(|a| m[a] as f64 * c[a] as f64).sum::<f64>();
                Complex64::from_polar(v, -2.0 * PI * phase / n)
            })
            .sum()
    }

    #[test]
    fn forward_matches_direct_dft() {
        for d in 1..=3 {
            let g = GridSpec::new(d, 8, 1.7).unwrap();
            let f = ScalarField::from_fn(g, |x| x.iter().enumerate().map(|(a, v)| ((a + 1) as f64 * v).sin() + v * v).sum());
            let mut ws = Spectral::new(g);
            let spec = ws.transform(&f);
            for (i, &c) in spec.iter().enumerate() {
                let want = direct_dft_mode(&f, ws.modes(i));
                assert!((c - want).norm() < 1e-10, "d={d} i={i}: {c} vs {want}");
            }
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let g = GridSpec::new(3, 16, 2.0).unwrap();
        let f = ScalarField::from_fn(g, |x| (x[0] * 3.0).cos() * x[1] - x[2].powi(3));
        let mut ws = Spectral::new(g);
        let spec = ws.transform(&f);
        let back = ws.synthesize(spec, 0.0);
        for (a, b) in f.values().iter().zip(back.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn symbol_multipliers_in_unit_interval_and_semigroup() {
        let g = GridSpec::new(2, 32, 3.0).unwrap();
        let a = HeatSymbol::new(g, 0.013).unwrap();
        let b = HeatSymbol::new(g, 0.21).unwrap();
        let ab = HeatSymbol::new(g, 0.223).unwrap();
        assert_eq!(a.multipliers()[0], 1.0);
        for ((x, y), z) in a.multipliers().iter().zip(b.multipliers()).zip(ab.multipliers()) {
            assert!(*x > 0.0 && *x <= 1.0);
            // Rounding of the exponent itself grows with |k^2 t|; compare
            // wherever the multiplier is numerically meaningful.
            if *z > 1e-13 {
                assert!(((x * y) - z).abs() <= 1e-14 * z);
            }
        }
        assert!(HeatSymbol::new(g, 0.0).is_err());
    }
}
