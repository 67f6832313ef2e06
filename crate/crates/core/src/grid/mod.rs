//! Periodic grids on Tⁿ = [0, 2π)ⁿ and fields on them.
//!
//! Fourier coefficients follow û_k = (2π)^{−n} ∫ u e^{−ik·x} dx, which the
//! trapezoid rule evaluates exactly on the grid: û = FFT(u)/N. Coefficients
//! are stored in FFT order; [`Grid::mode`] maps a flat index to its
//! wavenumber (the Nyquist index maps to −N/2).

mod io;
mod quantize;

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{read_fields, write_csv, write_fields, FieldIoError};
pub use quantize::{apply_op, apply_op_direct, apply_matrix_op, QuantizedMatrix, QuantizedOp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("axis size {0} is not a power of two ≥ 8")]
    Size(usize),
    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("component count mismatch: {0} vs {1}")]
    Components(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    sizes: Vec<usize>,
}

impl Grid {
    pub fn new(sizes: &[usize]) -> Result<Self, GridError> {
        if sizes.is_empty() || sizes.len() > 2 {
            return Err(GridError::Dimension(sizes.len()));
        }
        if let Some(&bad) = sizes.iter().find(|&&s| s < 8 || !s.is_power_of_two()) {
            return Err(GridError::Size(bad));
        }
        Ok(Grid { sizes: sizes.to_vec() })
    }

    pub fn line(size: usize) -> Result<Self, GridError> {
        Self::new(&[size])
    }

    pub fn square(size: usize) -> Result<Self, GridError> {
        Self::new(&[size, size])
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        TAU / self.sizes[axis] as f64
    }

    /// Volume element of the trapezoid rule.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    /// (2π)ⁿ
    pub fn torus_volume(&self) -> f64 {
        TAU.powi(self.dim() as i32)
    }

    fn split(&self, idx: usize) -> [usize; 2] {
        match self.dim() {
            1 => [idx, 0],
            _ => [idx / self.sizes[1], idx % self.sizes[1]],
        }
    }

    /// Physical coordinates of grid point `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let ij = self.split(idx);
        (0..self.dim()).map(|a| ij[a] as f64 * self.spacing(a)).collect()
    }

    fn axis_wavenumber(&self, axis: usize, i: usize) -> i64 {
        let n = self.sizes[axis];
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// Wavenumber of spectral index `idx`.
    pub fn mode(&self, idx: usize) -> Vec<i64> {
        let ij = self.split(idx);
        (0..self.dim()).map(|a| self.axis_wavenumber(a, ij[a])).collect()
    }

    /// Flat index of wavenumber `k` (taken modulo the grid).
    pub fn index_of(&self, k: &[i64]) -> usize {
        let wrap = |a: usize| k[a].rem_euclid(self.sizes[a] as i64) as usize;
        match self.dim() {
            1 => wrap(0),
            _ => wrap(0) * self.sizes[1] + wrap(1),
        }
    }

    /// Largest representable |k| per axis (Nyquist).
    pub fn nyquist(&self) -> usize {
        self.sizes.iter().copied().min().unwrap_or(0) / 2
    }

    pub fn modes(&self) -> Vec<Vec<i64>> {
        (0..self.len()).map(|i| self.mode(i)).collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

type Plan = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(size: usize) -> Plan {
    static CACHE: OnceLock<Mutex<HashMap<usize, Plan>>> = OnceLock::new();
    let mut cache = CACHE.get_or_init(Default::default).lock().expect("fft cache poisoned");
    cache
        .entry(size)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(size), planner.plan_fft_inverse(size))
        })
        .clone()
}

fn transform(grid: &Grid, data: &mut [C64], forward: bool) {
    let pick = |p: Plan| if forward { p.0 } else { p.1 };
    match grid.dim() {
        1 => pick(plans(grid.sizes[0])).process(data),
        _ => {
            let (rows, cols) = (grid.sizes[0], grid.sizes[1]);
            pick(plans(cols)).process(data);
            let col_fft = pick(plans(rows));
            let mut column = vec![C64::new(0.0, 0.0); rows];
            for c in 0..cols {
                for r in 0..rows {
                    column[r] = data[r * cols + c];
                }
                col_fft.process(&mut column);
                for r in 0..rows {
                    data[r * cols + c] = column[r];
                }
            }
        }
    }
}

/// Forward transform: grid values → Fourier coefficients.
pub fn to_spectral(grid: &Grid, phys: &[C64]) -> Result<Vec<C64>, GridError> {
    if phys.len() != grid.len() {
        return Err(GridError::Shape { expected: grid.len(), got: phys.len() });
    }
    let mut out = phys.to_vec();
    transform(grid, &mut out, true);
    let inv = 1.0 / grid.len() as f64;
    out.iter_mut().for_each(|c| *c *= inv);
    Ok(out)
}

/// Inverse transform: Fourier coefficients → grid values.
pub fn to_physical(grid: &Grid, spec: &[C64]) -> Result<Vec<C64>, GridError> {
    if spec.len() != grid.len() {
        return Err(GridError::Shape { expected: grid.len(), got: spec.len() });
    }
    let mut out = spec.to_vec();
    transform(grid, &mut out, false);
    Ok(out)
}

/// ⟨k⟩ = (1 + |k|²)^{1/2}
pub fn japanese(k: &[i64]) -> f64 {
    (1.0 + k.iter().map(|&v| (v * v) as f64).sum::<f64>()).sqrt()
}

/// A scalar field held in both physical and spectral form.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    phys: Vec<C64>,
    spec: Vec<C64>,
}

impl SpectralField {
    pub fn from_physical(grid: &Grid, phys: Vec<C64>) -> Result<Self, GridError> {
        let spec = to_spectral(grid, &phys)?;
        Ok(SpectralField { grid: grid.clone(), phys, spec })
    }

    pub fn from_spectral(grid: &Grid, spec: Vec<C64>) -> Result<Self, GridError> {
        let phys = to_physical(grid, &spec)?;
        Ok(SpectralField { grid: grid.clone(), phys, spec })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> C64) -> Self {
        let phys = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self::from_physical(grid, phys).expect("length matches by construction")
    }

    pub fn zeros(grid: &Grid) -> Self {
        let z = vec![C64::new(0.0, 0.0); grid.len()];
        SpectralField { grid: grid.clone(), phys: z.clone(), spec: z }
    }

    /// e^{ik·x}
    pub fn plane_wave(grid: &Grid, k: &[i64]) -> Self {
        let mut spec = vec![C64::new(0.0, 0.0); grid.len()];
        spec[grid.index_of(k)] = C64::new(1.0, 0.0);
        Self::from_spectral(grid, spec).expect("length matches by construction")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn phys(&self) -> &[C64] {
        &self.phys
    }

    pub fn spec(&self) -> &[C64] {
        &self.spec
    }

    pub fn into_spec(self) -> Vec<C64> {
        self.spec
    }

    /// Applies `f(k, û_k)` to every coefficient.
    pub fn map_spectral(&self, f: impl Fn(&[i64], C64) -> C64) -> Self {
        let spec = self.spec.iter().enumerate().map(|(i, &c)| f(&self.grid.mode(i), c)).collect();
        Self::from_spectral(&self.grid, spec).expect("length matches by construction")
    }

    pub fn scale(&self, s: C64) -> Self {
        SpectralField {
            grid: self.grid.clone(),
            phys: self.phys.iter().map(|v| v * s).collect(),
            spec: self.spec.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, GridError> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, GridError> {
        self.zip(other, |a, b| a - b)
    }

    fn zip(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self, GridError> {
        if self.grid != other.grid {
            return Err(GridError::GridMismatch);
        }
        Ok(SpectralField {
            grid: self.grid.clone(),
            phys: self.phys.iter().zip(&other.phys).map(|(&a, &b)| f(a, b)).collect(),
            spec: self.spec.iter().zip(&other.spec).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// ‖u‖_{H^s} = ((2π)ⁿ Σ ⟨k⟩^{2s} |û_k|²)^{1/2}
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let sum: f64 = self
            .spec
            .iter()
            .enumerate()
            .map(|(i, c)| japanese(&self.grid.mode(i)).powf(2.0 * s) * c.norm_sqr())
            .sum();
        (self.grid.torus_volume() * sum).sqrt()
    }

    /// Trapezoid L² norm.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * self.phys.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// Trapezoid L^p norm, 1 < p < ∞.
    pub fn lp_norm(&self, p: f64) -> f64 {
        assert!(p > 1.0 && p.is_finite(), "L^p norms are defined here for 1 < p < ∞");
        (self.grid.cell_volume() * self.phys.iter().map(|c| c.norm().powf(p)).sum::<f64>()).powf(1.0 / p)
    }

    /// ⟨D⟩^α u
    pub fn bessel_potential(&self, alpha: f64) -> Self {
        self.map_spectral(|k, c| c * japanese(k).powf(alpha))
    }
}

/// An m-vector of fields on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    comps: Vec<SpectralField>,
}

impl VectorField {
    pub fn new(comps: Vec<SpectralField>) -> Result<Self, GridError> {
        let grid = comps.first().ok_or(GridError::Components(0, 1))?.grid.clone();
        if comps.iter().any(|c| c.grid != grid) {
            return Err(GridError::GridMismatch);
        }
        Ok(VectorField { grid, comps })
    }

    pub fn zeros(grid: &Grid, m: usize) -> Self {
        VectorField { grid: grid.clone(), comps: vec![SpectralField::zeros(grid); m] }
    }

    pub fn from_spectral(grid: &Grid, spec: Vec<Vec<C64>>) -> Result<Self, GridError> {
        let comps = spec.into_iter().map(|s| SpectralField::from_spectral(grid, s)).collect::<Result<Vec<_>, _>>()?;
        if comps.is_empty() {
            return Err(GridError::Components(0, 1));
        }
        Ok(VectorField { grid: grid.clone(), comps })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.comps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comps.is_empty()
    }

    pub fn component(&self, i: usize) -> &SpectralField {
        &self.comps[i]
    }

    pub fn components(&self) -> &[SpectralField] {
        &self.comps
    }

    pub fn spectra(&self) -> Vec<Vec<C64>> {
        self.comps.iter().map(|c| c.spec.clone()).collect()
    }

    pub fn l2_norm(&self) -> f64 {
        self.comps.iter().map(|c| c.l2_norm().powi(2)).sum::<f64>().sqrt()
    }

    /// ℓ² combination of the componentwise Sobolev norms.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.comps.iter().map(|c| c.sobolev_norm(s).powi(2)).sum::<f64>().sqrt()
    }

    /// L^p norm of the pointwise Euclidean modulus.
    pub fn lp_norm(&self, p: f64) -> f64 {
        assert!(p > 1.0 && p.is_finite(), "L^p norms are defined here for 1 < p < ∞");
        let sum: f64 = (0..self.grid.len())
            .map(|j| self.comps.iter().map(|c| c.phys[j].norm_sqr()).sum::<f64>().sqrt().powf(p))
            .sum();
        (self.grid.cell_volume() * sum).powf(1.0 / p)
    }

    pub fn bessel_potential(&self, alpha: f64) -> Self {
        VectorField { grid: self.grid.clone(), comps: self.comps.iter().map(|c| c.bessel_potential(alpha)).collect() }
    }

    pub fn sub(&self, other: &Self) -> Result<Self, GridError> {
        if self.len() != other.len() {
            return Err(GridError::Components(self.len(), other.len()));
        }
        let comps = self.comps.iter().zip(&other.comps).map(|(a, b)| a.sub(b)).collect::<Result<_, _>>()?;
        Ok(VectorField { grid: self.grid.clone(), comps })
    }

    pub fn add(&self, other: &Self) -> Result<Self, GridError> {
        if self.len() != other.len() {
            return Err(GridError::Components(self.len(), other.len()));
        }
        let comps = self.comps.iter().zip(&other.comps).map(|(a, b)| a.add(b)).collect::<Result<_, _>>()?;
        Ok(VectorField { grid: self.grid.clone(), comps })
    }

    pub fn scale(&self, s: C64) -> Self {
        VectorField { grid: self.grid.clone(), comps: self.comps.iter().map(|c| c.scale(s)).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &Grid, seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phys = (0..grid.len()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        SpectralField::from_physical(grid, phys).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::line(64).is_ok());
        assert_eq!(Grid::line(4), Err(GridError::Size(4)));
        assert_eq!(Grid::line(48), Err(GridError::Size(48)));
        assert_eq!(Grid::new(&[8, 8, 8]), Err(GridError::Dimension(3)));
        let g = Grid::new(&[8, 16]).unwrap();
        assert_eq!(g.mode(g.index_of(&[-3, 5])), vec![-3, 5]);
        assert_eq!(g.mode(4), vec![0, 4]);
        assert_eq!(Grid::line(8).unwrap().mode(4), vec![-4]);
    }

    #[test]
    fn constant_and_exact_modes() {
        let g = Grid::line(64).unwrap();
        let one = SpectralField::from_fn(&g, |_| C64::new(1.0, 0.0));
        assert_relative_eq!(one.spec()[0].re, 1.0, epsilon = 1e-15);
        assert!(one.spec()[1..].iter().all(|c| c.norm() < 1e-15));
        let w = SpectralField::from_fn(&g, |x| C64::from_polar(1.0, 3.0 * x[0]));
        for (i, c) in w.spec().iter().enumerate() {
            let want = if g.mode(i) == vec![3] { 1.0 } else { 0.0 };
            assert!((c - want).norm() <= 1e-14);
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        for grid in [Grid::line(128).unwrap(), Grid::new(&[16, 32]).unwrap()] {
            let u = random_field(&grid, 7);
            let back = to_physical(&grid, &to_spectral(&grid, u.phys()).unwrap()).unwrap();
            let scale = u.l2_norm();
            let err: f64 = back.iter().zip(u.phys()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(err * grid.cell_volume().sqrt() <= 1e-12 * scale);
            assert_relative_eq!(u.l2_norm(), u.sobolev_norm(0.0), max_relative = 1e-10);
        }
        assert_eq!(to_spectral(&Grid::line(8).unwrap(), &[C64::new(0.0, 0.0); 3]), Err(GridError::Shape { expected: 8, got: 3 }));
    }

    #[test]
    fn sobolev_examples() {
        let g = Grid::line(64).unwrap();
        let w = SpectralField::plane_wave(&g, &[3]);
        assert_relative_eq!(w.sobolev_norm(0.0), TAU.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(w.sobolev_norm(1.0), TAU.sqrt() * 10f64.sqrt(), max_relative = 1e-14);
        let u = random_field(&g, 3);
        let norms: Vec<f64> = [-1.0, -0.5, 0.0, 0.5, 1.0, 2.0].iter().map(|&s| u.sobolev_norm(s)).collect();
        assert!(norms.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn lp_and_bessel_examples() {
        let g = Grid::line(64).unwrap();
        let one = SpectralField::from_fn(&g, |_| C64::new(1.0, 0.0));
        for p in [1.5, 2.0, 4.0] {
            assert_relative_eq!(one.lp_norm(p), TAU.powf(1.0 / p), max_relative = 1e-14);
        }
        let w = SpectralField::plane_wave(&g, &[3]).bessel_potential(-1.0);
        let want = SpectralField::plane_wave(&g, &[3]).scale(C64::new(10f64.powf(-0.5), 0.0));
        assert!(w.sub(&want).unwrap().l2_norm() < 1e-14);
        let u = random_field(&g, 11);
        assert_relative_eq!(u.lp_norm(2.0), u.sobolev_norm(0.0), max_relative = 1e-10);
    }
}
