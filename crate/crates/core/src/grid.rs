//! Periodic lattice geometry and real-valued fields living on it.
//!
//! A [`GridSpec`] describes the torus `[0, L)^d` sampled with `n` points per
//! side. Fields are stored row-major with the last axis fastest.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on `n^d`; roughly 128 MiB per field.
pub const DEFAULT_MAX_SITES: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    d: usize,
    n: usize,
    side: f64,
}

impl GridSpec {
    pub fn new(d: usize, n: usize, side: f64) -> Result<Self> {
        Self::with_cap(d, n, side, DEFAULT_MAX_SITES)
    }

    pub fn with_cap(d: usize, n: usize, side: f64, max_sites: usize) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidGrid(format!("dimension {d} not in 1..=3")));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("{n} points per side is not a power of two >= 2")));
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::InvalidGrid(format!("side length {side} must be positive")));
        }
        let sites = n
            .checked_pow(d as u32)
            .filter(|&s| s <= max_sites)
            .ok_or_else(|| Error::InvalidGrid(format!("{n}^{d} sites exceed the cap of {max_sites}")))?;
        debug_assert!(sites > 0);
        Ok(Self { d, n, side })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn points_per_side(&self) -> usize {
        self.n
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    /// Lattice spacing `L / n` (exact, since `n` is a power of two).
    pub fn spacing(&self) -> f64 {
        self.side / self.n as f64
    }

    /// Volume element `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.d as i32)
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.d as i32)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Lattice coordinates of a flat index (first axis slowest).
    pub fn coords(&self, mut index: usize) -> [usize; 3] {
        let mut c = [0; 3];
        for axis in (0..self.d).rev() {
            c[axis] = index % self.n;
            index /= self.n;
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords[..self.d].iter().fold(0, |acc, &c| acc * self.n + c % self.n)
    }

    /// Flat index of the site displaced from the origin by a signed lattice offset.
    pub fn offset_index(&self, offset: &[i64]) -> usize {
        let n = self.n as i64;
        let mut c = [0usize; 3];
        for (axis, ci) in c.iter_mut().enumerate().take(self.d) {
            *ci = offset.get(axis).copied().unwrap_or(0).rem_euclid(n) as usize;
        }
        self.index(&c)
    }

    /// Index of `a + b` on the torus.
    pub fn shift_index(&self, a: usize, b: usize) -> usize {
        let ca = self.coords(a);
        let cb = self.coords(b);
        let mut c = [0usize; 3];
        for axis in 0..self.d {
            c[axis] = (ca[axis] + cb[axis]) % self.n;
        }
        self.index(&c)
    }

    /// Minimal-image signed lattice offset of each axis coordinate.
    pub fn signed_coords(&self, index: usize) -> [i64; 3] {
        let c = self.coords(index);
        let n = self.n as i64;
        let mut out = [0i64; 3];
        for axis in 0..self.d {
            let m = c[axis] as i64;
            out[axis] = if m > n / 2 { m - n } else { m };
        }
        out
    }

    /// Squared minimal-image distance from the origin.
    pub fn dist2_from_origin(&self, index: usize) -> f64 {
        let h = self.spacing();
        self.signed_coords(index)[..self.d]
            .iter()
            .map(|&m| (m as f64 * h).powi(2))
            .sum()
    }

    /// Squared minimal-image distance between a site and a physical point.
    pub fn dist2_to_point(&self, index: usize, point: &[f64]) -> f64 {
        let h = self.spacing();
        let c = self.coords(index);
        (0..self.d)
            .map(|axis| {
                let p = point.get(axis).copied().unwrap_or(0.0);
                let mut dx = (c[axis] as f64 * h - p).rem_euclid(self.side);
                if dx > 0.5 * self.side {
                    dx -= self.side;
                }
                dx * dx
            })
            .sum()
    }
}

/// Real values on a grid together with a time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
    time: f64,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![0.0; grid.len()], time: 0.0 }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()], time: 0.0 }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values, time })
    }

    /// Samples `f(x)` at every site, with `x` the physical position `j * h`.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let h = grid.spacing();
        let values = (0..grid.len())
            .map(|i| {
                let c = grid.coords(i);
                let x = [c[0] as f64 * h, c[1] as f64 * h, c[2] as f64 * h];
                f(&x[..grid.dim()])
            })
            .collect();
        Self { grid, values, time: 0.0 }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn set_time(&mut self, time: f64) {
        self.time = time;
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Riemann sum `h^d * sum(values)`.
    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect(), time: self.time }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn neg(&self) -> Self {
        self.map(|v| -v)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, values, time: self.time })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn check_grid(&self, other: &Self) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Translates the field by a lattice offset: `out(x) = self(x - offset)`.
    pub fn translate(&self, offset: &[i64]) -> Self {
        let shift = self.grid.offset_index(offset);
        let mut values = vec![0.0; self.values.len()];
        for (i, &v) in self.values.iter().enumerate() {
            values[self.grid.shift_index(i, shift)] = v;
        }
        Self { grid: self.grid, values, time: self.time }
    }

    /// Writes the flat binary record: `d: u32, n: u32, L: f64, time: f64`
    /// followed by the row-major values, all little-endian.
    pub fn write_record<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.grid.d as u32).to_le_bytes())?;
        w.write_all(&(self.grid.n as u32).to_le_bytes())?;
        w.write_all(&self.grid.side.to_le_bytes())?;
        w.write_all(&self.time.to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * self.values.len());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_record<R: Read>(mut r: R) -> Result<Self> {
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let d = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let side = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let time = f64::from_le_bytes(b8);
        let grid = GridSpec::new(d, n, side).map_err(|e| Error::Format(e.to_string()))?;
        let mut raw = vec![0u8; 8 * grid.len()];
        r.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self { grid, values, time })
    }
}

/// Lattice pairing `h^d * sum(f * g)`.
pub fn inner_product(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.check_grid(g)?;
    let s: f64 = f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum();
    Ok(f.grid.cell_volume() * s)
}
