//! Bump mollifiers, lattice white noise and the smoothed initial law `rho * xi`.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::rng::RngStream;
use crate::spectral::{with_spectral, Spectral};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MollifierKind {
    #[default]
    Bump,
}

/// Radially symmetric mollifier of unit mass supported in the ball of radius `width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub kind: MollifierKind,
    pub width: f64,
}

impl MollifierSpec {
    pub fn bump(width: f64) -> Self {
        Self { kind: MollifierKind::Bump, width }
    }

    /// Unnormalized profile at squared radius `r2`.
    fn profile(&self, r2: f64) -> f64 {
        let s = r2 / (self.width * self.width);
        if s < 1.0 {
            (-1.0 / (1.0 - s)).exp()
        } else {
            0.0
        }
    }

    pub fn check_resolved(&self, grid: &GridSpec) -> Result<()> {
        let h = grid.spacing();
        if !(self.width.is_finite() && self.width >= 2.0 * h) {
            return Err(Error::WidthUnresolvable { width: self.width, spacing: h });
        }
        if self.width >= 0.5 * grid.side() {
            return Err(Error::InvalidParam(format!(
                "mollifier width {} must stay below half the torus side {}",
                self.width,
                grid.side()
            )));
        }
        Ok(())
    }
}

/// Discretized bump centred at the origin, renormalized so `h^d * sum = 1`.
pub fn make_mollifier(spec: &MollifierSpec, grid: &GridSpec) -> Result<ScalarField> {
    spec.check_resolved(grid)?;
    let mut values: Vec<f64> = (0..grid.len()).map(|i| spec.profile(grid.dist2_from_origin(i))).collect();
    let mass = grid.cell_volume() * values.iter().sum::<f64>();
    for v in &mut values {
        *v /= mass;
    }
    ScalarField::from_values(*grid, values, 0.0)
}

/// Lattice white noise: i.i.d. `N(0, h^-d)` site values.
pub fn sample_white_noise(grid: &GridSpec, rng: &mut RngStream) -> ScalarField {
    let amp = grid.cell_volume().recip().sqrt();
    let mut values = vec![0.0; grid.len()];
    rng.fill_standard_normal(&mut values);
    for v in &mut values {
        *v *= amp;
    }
    ScalarField::from_values(*grid, values, 0.0).expect("length matches grid")
}

/// Periodic convolution scaled by `h^d`.
pub fn convolve(f: &ScalarField, g: &ScalarField) -> Result<ScalarField> {
    f.check_grid(g)?;
    with_spectral(f.grid(), |ws| ws.convolve(f, g))
}

pub fn initial_condition(grid: &GridSpec, moll: &MollifierSpec, rng: &mut RngStream) -> Result<ScalarField> {
    let rho = make_mollifier(moll, grid)?;
    let xi = sample_white_noise(grid, rng);
    convolve(&rho, &xi)
}

/// `(rho * rho~)(x)` at a lattice offset, by direct summation over the support.
pub fn covariance_init(moll: &MollifierSpec, grid: &GridSpec, offset: &[i64]) -> Result<f64> {
    let rho = make_mollifier(moll, grid)?;
    covariance_from_mollifier(&rho, offset)
}

pub(crate) fn covariance_from_mollifier(rho: &ScalarField, offset: &[i64]) -> Result<f64> {
    let grid = rho.grid();
    if offset.len() != grid.dim() {
        return Err(Error::InvalidParam(format!("offset has {} axes, grid has {}", offset.len(), grid.dim())));
    }
    let shift = grid.offset_index(offset);
    let vals = rho.values();
    let mut acc = 0.0;
    for (z, &a) in vals.iter().enumerate() {
        if a != 0.0 {
            acc += a * vals[grid.shift_index(z, shift)];
        }
    }
    Ok(grid.cell_volume() * acc)
}

/// Whole covariance field `rho * rho~` via the spectral convolution.
pub fn covariance_field(moll: &MollifierSpec, grid: &GridSpec) -> Result<ScalarField> {
    let rho = make_mollifier(moll, grid)?;
    convolve(&rho, &rho)
}

/// Cached mollifier spectrum for repeated sampling of `rho * xi` on one grid.
#[derive(Debug, Clone)]
pub struct InitialLaw {
    grid: GridSpec,
    moll: MollifierSpec,
    mollifier: ScalarField,
    spectrum: Vec<Complex64>,
}

impl InitialLaw {
    pub fn new(grid: GridSpec, moll: MollifierSpec) -> Result<Self> {
        let mollifier = make_mollifier(&moll, &grid)?;
        let dv = grid.cell_volume();
        let spectrum = with_spectral(&grid, |ws| ws.transform(&mollifier))
            .into_iter()
            .map(|c| c * dv)
            .collect();
        Ok(Self { grid, moll, mollifier, spectrum })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn mollifier_spec(&self) -> &MollifierSpec {
        &self.moll
    }

    pub fn mollifier(&self) -> &ScalarField {
        &self.mollifier
    }

    /// Spectrum of `h^d * rho`, the Fourier multiplier of `f -> rho * f`.
    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    /// Smooths a noise field: `rho * noise`.
    pub fn smooth(&self, ws: &mut Spectral, noise: &ScalarField) -> Result<ScalarField> {
        if noise.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let mut spec = ws.transform(noise);
        for (c, m) in spec.iter_mut().zip(&self.spectrum) {
            *c *= *m;
        }
        Ok(ws.synthesize(spec, 0.0))
    }

    /// Draws `(xi, rho * xi)`.
    pub fn sample(&self, ws: &mut Spectral, rng: &mut RngStream) -> Result<(ScalarField, ScalarField)> {
        let xi = sample_white_noise(&self.grid, rng);
        let u0 = self.smooth(ws, &xi)?;
        Ok((xi, u0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mollifier_is_a_unit_mass_nonnegative_bump() {
        let g = GridSpec::new(1, 256, 4.0).unwrap();
        let spec = MollifierSpec::bump(0.25);
        let rho = make_mollifier(&spec, &g).unwrap();
        assert!((rho.integral() - 1.0).abs() < 1e-12);
        assert!(rho.min() >= 0.0);
        // |x| = width lands on the lattice: 0.25 = 16 h.
        assert_eq!(rho.values()[16], 0.0);
        assert_eq!(rho.values()[256 - 16], 0.0);
        assert!(rho.values()[15] > 0.0);
        for i in 0..256 {
            if g.dist2_from_origin(i) >= 0.0625 {
                assert_eq!(rho.values()[i], 0.0);
            }
        }
    }

    #[test]
    fn mollifier_in_three_dimensions() {
        let g = GridSpec::new(3, 16, 4.0).unwrap();
        let rho = make_mollifier(&MollifierSpec::bump(0.75), &g).unwrap();
        assert!((rho.integral() - 1.0).abs() < 1e-12);
        assert!(rho.min() >= 0.0);
    }

    #[test]
    fn unresolved_width_is_rejected() {
        let g = GridSpec::new(2, 16, 1.0).unwrap();
        let err = make_mollifier(&MollifierSpec::bump(0.1), &g).unwrap_err();
        assert!(matches!(err, Error::WidthUnresolvable { .. }));
        assert!(make_mollifier(&MollifierSpec::bump(0.125), &g).is_ok());
    }

    #[test]
    fn white_noise_is_deterministic_and_linear() {
        let g = GridSpec::new(1, 4, 1.0).unwrap();
        let a = sample_white_noise(&g, &mut RngStream::new(11, 0));
        let b = sample_white_noise(&g, &mut RngStream::new(11, 0));
        assert_eq!(a, b);
        // Each site is one standard normal times h^{-d/2}.
        let mut r = RngStream::new(11, 0);
        for &v in a.values() {
            assert_eq!(v, r.standard_normal() * 2.0);
        }
    }

    #[test]
    fn white_noise_site_variance() {
        // 1e5 single-site draws; variance estimate sd is sqrt(2/n) * h^-d.
        let g = GridSpec::new(1, 4, 1.0).unwrap();
        let n = 100_000;
        let mut s2 = 0.0;
        for r in 0..n / 4 {
            let xi = sample_white_noise(&g, &mut RngStream::new(3, r));
            s2 += xi.values().iter().map(|v| v * v).sum::<f64>();
        }
        let var = s2 / n as f64;
        let target = 1.0 / g.cell_volume();
        let se = target * (2.0 / n as f64).sqrt();
        assert!((var - target).abs() < 3.0 * se, "{var} vs {target} (se {se})");
    }

    #[test]
    fn delta_is_convolution_identity() {
        let g = GridSpec::new(2, 16, 2.0).unwrap();
        let f = ScalarField::from_fn(g, |x| (x[0] * 2.0).sin() + x[1]);
        let mut delta = ScalarField::zeros(g);
        delta.values_mut()[0] = 1.0 / g.cell_volume();
        let out = convolve(&f, &delta).unwrap();
        for (a, b) in f.values().iter().zip(out.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn convolution_commutes() {
        let g = GridSpec::new(3, 8, 1.0).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0] * x[1] - x[2]);
        let k = ScalarField::from_fn(g, |x| (x[0] + 2.0 * x[2]).cos());
        let a = convolve(&f, &k).unwrap();
        let b = convolve(&k, &f).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn convolution_adds_second_moments() {
        // Direct O(N^2) lattice sum as the oracle for the second moment of a*b.
        let g = GridSpec::new(1, 128, 8.0).unwrap();
        let a = make_mollifier(&MollifierSpec::bump(0.7), &g).unwrap();
        let b = make_mollifier(&MollifierSpec::bump(1.1), &g).unwrap();
        let second = |f: &ScalarField| -> f64 {
            (0..g.len()).map(|i| g.dist2_from_origin(i) * f.values()[i]).sum::<f64>() * g.cell_volume()
        };
        let c = convolve(&a, &b).unwrap();
        let mut direct = vec![0.0; g.len()];
        for (x, slot) in direct.iter_mut().enumerate() {
            for y in 0..g.len() {
                let xm = (x + g.len() - y) % g.len();
                *slot += a.values()[xm] * b.values()[y] * g.cell_volume();
            }
        }
        let direct = ScalarField::from_values(g, direct, 0.0).unwrap();
        let oracle = second(&direct);
        assert!((second(&c) - oracle).abs() < 1e-10);
        assert!((oracle - (second(&a) + second(&b))).abs() < 1e-10);
    }

    #[test]
    fn covariance_init_properties() {
        let g = GridSpec::new(2, 32, 4.0).unwrap();
        let m = MollifierSpec::bump(0.5);
        let rho = make_mollifier(&m, &g).unwrap();
        let c0 = covariance_init(&m, &g, &[0, 0]).unwrap();
        let sq: f64 = rho.values().iter().map(|v| v * v).sum::<f64>() * g.cell_volume();
        assert!((c0 - sq).abs() < 1e-12 && c0 > 0.0);
        assert_eq!(covariance_init(&m, &g, &[8, 0]).unwrap(), 0.0);
        assert_eq!(covariance_init(&m, &g, &[6, 6]).unwrap(), 0.0);
        let a = covariance_init(&m, &g, &[2, -1]).unwrap();
        let b = covariance_init(&m, &g, &[-2, 1]).unwrap();
        assert!((a - b).abs() < 1e-15 && a < c0);
        let field = covariance_field(&m, &g).unwrap();
        assert!((field.integral() - 1.0).abs() < 1e-10);
        assert!((field.values()[g.offset_index(&[2, -1])] - a).abs() < 1e-12);
    }
}
