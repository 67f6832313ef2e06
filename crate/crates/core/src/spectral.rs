//! Fourier–Galerkin truncation of P = diag(a_j) + B, eigenvalue counting and
//! two-term Weyl fits.
//!
//! The basis is e_k ⊗ e_i with e_k = (2π)^{−n/2}e^{ik·x}, |k_s| ≤ K, ordered
//! component-major. The entry at ((k′, i), (k, j)) is p̂_{ij}(k′ − k; k), the
//! Fourier coefficient in x of the profile p_{ij}(·, k).

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::characteristics::{ComplexSymbol, MatrixSymbol, RootSystem};
use crate::fit::two_term_fit;
use crate::geometry::{detect_periods, FlowParams, GeometryError};
use crate::grid::{to_spectral, Grid};
use crate::measure::random_cosphere_point;
use crate::symdsl::{EvalError, EvalMode, SymbolExpr};

/// Largest supported Galerkin dimension.
pub const MAX_DIM: usize = 12000;
/// Relative x-profile mass beyond |q| = 2K tolerated before aliasing is reported.
pub const ALIAS_TOL: f64 = 1e-8;
/// Periodic-set fraction at or above which the second Weyl coefficient is flagged.
pub const PERIODIC_FLAG: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("x-profile mass beyond 2K modes is {0:e} (> 1e-8); raise K")]
    Cutoff(f64),
    #[error("Galerkin dimension {0} exceeds {MAX_DIM}")]
    TooLarge(usize),
    #[error("eigensolve failed: {0}")]
    Numerical(String),
    #[error("{0}")]
    Window(String),
    #[error("root {0} is not positive on the cosphere")]
    NotElliptic(usize),
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Dense Galerkin matrix of P.
#[derive(Debug, Clone)]
pub struct GalerkinMatrix {
    pub cutoff: usize,
    pub n: usize,
    pub m: usize,
    /// Wavenumbers of the basis, per component.
    pub modes: Vec<Vec<i64>>,
    /// Hermitian part ½(G + G*) of the raw assembly.
    pub matrix: DMatrix<C64>,
    /// max |G − G*| of the raw assembly.
    pub raw_asymmetry: f64,
}

impl GalerkinMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

fn basis_modes(n: usize, cutoff: usize) -> Vec<Vec<i64>> {
    let k = cutoff as i64;
    match n {
        1 => (-k..=k).map(|a| vec![a]).collect(),
        _ => (-k..=k).flat_map(|a| (-k..=k).map(move |b| vec![a, b])).collect(),
    }
}

/// Sampling grid for x-profiles: a power of two ≥ max(8K, 16) per axis.
fn profile_grid(n: usize, cutoff: usize) -> Grid {
    let size = (8 * cutoff).max(16).next_power_of_two();
    Grid::new(&vec![size; n]).expect("power of two ≥ 16")
}

/// Fourier coefficients of the x-profile of `sym` at frequency k, with the relative mass beyond 2K.
fn profile_coeffs(sym: &ComplexSymbol, grid: &Grid, k: &[i64], cutoff: usize) -> Result<(Vec<C64>, f64), SpectralError> {
    let xi: Vec<f64> = k.iter().map(|&v| v as f64).collect();
    let phys = grid.points().iter().map(|x| sym.eval_at(x, &xi, 0.0, EvalMode::Regularized)).collect::<Result<Vec<_>, _>>()?;
    let spec = to_spectral(grid, &phys).expect("profile has grid length");
    let (mut total, mut outside) = (0.0, 0.0);
    for (i, c) in spec.iter().enumerate() {
        let w = c.norm_sqr();
        total += w;
        if grid.mode(i).iter().any(|q| q.unsigned_abs() as usize > 2 * cutoff) {
            outside += w;
        }
    }
    Ok((spec, if total > 0.0 { (outside / total).sqrt() } else { 0.0 }))
}

/// Galerkin matrix of diag(roots) + B at cutoff K.
pub fn assemble(roots: &RootSystem, b: &MatrixSymbol, cutoff: usize) -> Result<GalerkinMatrix, SpectralError> {
    let m = roots.roots.len();
    if b.size() != m {
        return Err(SpectralError::Shape(format!("B is {0}×{0} but there are {m} roots", b.size())));
    }
    let n = roots.dim();
    if n > 2 {
        return Err(SpectralError::Shape(format!("dimension {n} is not supported")));
    }
    let modes = basis_modes(n, cutoff);
    let nm = modes.len();
    let dim = m * nm;
    if dim > MAX_DIM {
        return Err(SpectralError::TooLarge(dim));
    }
    let grid = profile_grid(n, cutoff);
    let index: std::collections::HashMap<Vec<i64>, usize> = modes.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
    let mut g = DMatrix::<C64>::zeros(dim, dim);
    for i in 0..m {
        for j in 0..m {
            let mut sym = b.entry(i, j).clone();
            if i == j {
                sym.re = sym.re.add(&roots.roots[i]);
            }
            if sym.is_zero() {
                continue;
            }
            let columns: Vec<(usize, Vec<(usize, C64)>)> = if !sym.depends_on_x() {
                modes
                    .par_iter()
                    .enumerate()
                    .map(|(c, k)| {
                        let xi: Vec<f64> = k.iter().map(|&v| v as f64).collect();
                        let v = sym.eval_at(&vec![0.0; n], &xi, 0.0, EvalMode::Regularized)?;
                        Ok((c, vec![(c, v)]))
                    })
                    .collect::<Result<_, SpectralError>>()?
            } else {
                modes
                    .par_iter()
                    .enumerate()
                    .map(|(c, k)| {
                        let (spec, alias) = profile_coeffs(&sym, &grid, k, cutoff)?;
                        if alias > ALIAS_TOL {
                            return Err(SpectralError::Cutoff(alias));
                        }
                        let col = (0..spec.len())
                            .filter(|&s| spec[s] != C64::default())
                            .filter_map(|s| {
                                let q = grid.mode(s);
                                let target: Vec<i64> = k.iter().zip(&q).map(|(a, b)| a + b).collect();
                                index.get(&target).map(|&r| (r, spec[s]))
                            })
                            .collect();
                        Ok((c, col))
                    })
                    .collect::<Result<_, SpectralError>>()?
            };
            for (c, col) in columns {
                for (r, v) in col {
                    g[(i * nm + r, j * nm + c)] += v;
                }
            }
        }
    }
    let adj = g.adjoint();
    let raw_asymmetry = (&g - &adj).iter().fold(0.0f64, |a, v| a.max(v.norm()));
    let matrix = (&g + &adj).scale(0.5);
    Ok(GalerkinMatrix { cutoff, n, m, modes, matrix, raw_asymmetry })
}

/// Ascending eigenvalues by a dense Hermitian eigensolve.
///
/// A + iB is solved through the real symmetric embedding [[A, −B], [B, A]],
/// whose spectrum is that of A + iB with every eigenvalue doubled.
pub fn eigenvalues(g: &GalerkinMatrix) -> Result<Vec<f64>, SpectralError> {
    let a = &g.matrix;
    let n = a.nrows();
    let real = a.iter().all(|v| v.im == 0.0);
    let mut evs = if real {
        faer::Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)].re).selfadjoint_eigenvalues(faer::Side::Lower)
    } else {
        let emb = faer::Mat::<f64>::from_fn(2 * n, 2 * n, |i, j| {
            let v = a[(i % n, j % n)];
            match (i < n, j < n) {
                (true, true) | (false, false) => v.re,
                (true, false) => -v.im,
                (false, true) => v.im,
            }
        });
        emb.selfadjoint_eigenvalues(faer::Side::Lower)
    };
    if evs.iter().any(|v| !v.is_finite()) {
        return Err(SpectralError::Numerical("non-finite eigenvalue".into()));
    }
    evs.sort_by(f64::total_cmp);
    if !real {
        evs = evs.into_iter().step_by(2).collect();
    }
    Ok(evs)
}

/// N(λ) = #{j: λ_j < λ} on ascending eigenvalues.
pub fn counting(evs: &[f64], lambda: f64) -> usize {
    evs.partition_point(|&v| v < lambda)
}

/// Real symmetric tridiagonal form (diagonal, |off-diagonal|) of a Hermitian matrix by Householder reflections.
pub fn tridiagonalize(a: &DMatrix<C64>) -> (Vec<f64>, Vec<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut off = Vec::with_capacity(n.saturating_sub(1));
    for k in 0..n.saturating_sub(1) {
        let x: Vec<C64> = (k + 1..n).map(|i| a[(i, k)]).collect();
        let norm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || x.len() == 1 {
            off.push(x[0].norm());
            continue;
        }
        let phase = if x[0].norm() > 0.0 { x[0] / x[0].norm() } else { C64::new(1.0, 0.0) };
        let alpha = -phase * norm;
        let mut v = x.clone();
        v[0] -= alpha;
        let vn = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|c| *c /= vn);
        let len = v.len();
        // p = A₂₂ v, q = p − (v*p) v, A₂₂ ← A₂₂ − 2vq* − 2qv*.
        let p: Vec<C64> = (0..len).map(|r| (0..len).map(|c| a[(k + 1 + r, k + 1 + c)] * v[c]).sum()).collect();
        let kappa: C64 = v.iter().zip(&p).map(|(vi, pi)| vi.conj() * pi).sum();
        let q: Vec<C64> = p.iter().zip(&v).map(|(pi, vi)| pi - kappa * vi).collect();
        for c in 0..len {
            let (vc, qc) = (v[c].conj(), q[c].conj());
            for r in 0..len {
                a[(k + 1 + r, k + 1 + c)] -= 2.0 * (v[r] * qc + q[r] * vc);
            }
        }
        off.push(alpha.norm());
        for r in k + 1..n {
            a[(r, k)] = C64::default();
            a[(k, r)] = C64::default();
        }
    }
    ((0..n).map(|i| a[(i, i)].re).collect(), off)
}

/// Number of eigenvalues of the symmetric tridiagonal (d, e) strictly below λ, by Sturm sequence.
pub fn sturm_count(d: &[f64], e: &[f64], lambda: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..d.len() {
        let e2 = if i == 0 { 0.0 } else { e[i - 1] * e[i - 1] };
        q = d[i] - lambda - if i == 0 { 0.0 } else { e2 / q };
        if q == 0.0 {
            q = f64::EPSILON * (d[i].abs() + lambda.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeylFit {
    pub c_n: f64,
    pub c_n1: f64,
    /// RMS residual of N(λ) about the fit.
    pub residual: f64,
    pub window: (f64, f64),
}

/// Least-squares fit N(λ) ≈ c_n λⁿ + c′_n λ^{n−1} on `points` equispaced λ in the window.
pub fn weyl_fit(evs: &[f64], n: usize, window: (f64, f64), points: usize) -> Result<WeylFit, SpectralError> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo && points >= 2) {
        return Err(SpectralError::Window(format!("invalid window [{lo}, {hi}] with {points} points")));
    }
    let lam: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    let y: Vec<f64> = lam.iter().map(|&l| counting(evs, l) as f64).collect();
    let f: Vec<f64> = lam.iter().map(|l| l.powi(n as i32)).collect();
    let g: Vec<f64> = lam.iter().map(|l| l.powi(n as i32 - 1)).collect();
    let (c_n, c_n1, residual) = two_term_fit(&f, &g, &y).ok_or_else(|| SpectralError::Window("degenerate fit".into()))?;
    Ok(WeylFit { c_n, c_n1, residual, window })
}

/// (2π)^{−n} Σ_j vol{(x, ξ): a_j(x, ξ) < 1} for 1-homogeneous positive roots,
/// by Monte-Carlo in polar form vol = ∫∫ a_j(x, ω)^{−n}/n dω dx.
pub fn weyl_predict(roots: &[SymbolExpr], samples: usize, seed: u64) -> Result<f64, SpectralError> {
    let n = roots.first().map_or(1, |r| r.dim());
    let sphere = match n {
        1 => 2.0,
        2 => TAU,
        _ => 4.0 * PI,
    };
    let mut total = 0.0;
    for (idx, a) in roots.iter().enumerate() {
        let chunks = samples.div_ceil(4096);
        let sum: f64 = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((idx as u64) << 32) | c as u64);
                let mut s = 0.0;
                for _ in 0..4096.min(samples - c * 4096) {
                    let p = random_cosphere_point(n, &mut rng);
                    let v = a.eval_at(p.x(), p.xi(), 0.0, EvalMode::Exact)?;
                    if v <= 0.0 {
                        return Err(SpectralError::NotElliptic(idx));
                    }
                    s += v.powi(-(n as i32));
                }
                Ok(s)
            })
            .collect::<Result<Vec<f64>, SpectralError>>()?
            .iter()
            .sum();
        total += sum / samples as f64 * sphere / n as f64;
    }
    Ok(total)
}

/// Smallest value of any root on sampled cosphere points.
pub fn min_root_speed(roots: &[SymbolExpr], samples: usize, seed: u64) -> Result<f64, SpectralError> {
    let n = roots.first().map_or(1, |r| r.dim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for _ in 0..samples {
        let p = random_cosphere_point(n, &mut rng);
        for a in roots {
            best = best.min(a.eval_at(p.x(), p.xi(), 0.0, EvalMode::Exact)?);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Serialize)]
pub struct WeylReport {
    pub cutoff: usize,
    pub dim: usize,
    pub eigenvalues: Vec<f64>,
    pub lambda: Vec<f64>,
    pub counts: Vec<usize>,
    pub fit: WeylFit,
    pub prediction: f64,
    /// |c_n − c_n^pred|/c_n^pred.
    pub rel_error: f64,
    pub periodic_fraction: f64,
    /// False when the periodic set looks large, so c′_n is not meaningful.
    pub second_term_reliable: bool,
    pub raw_asymmetry: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeylParams {
    pub cutoff: usize,
    /// Fit window; `None` uses [0.2, 0.5]·(min speed·K).
    pub window: Option<(f64, f64)>,
    pub points: usize,
    pub samples: usize,
    pub seed: u64,
    pub period_seeds: usize,
    pub period_window: (f64, f64),
    pub period_tol: f64,
}

impl Default for WeylParams {
    fn default() -> Self {
        WeylParams {
            cutoff: 128,
            window: None,
            points: 400,
            samples: 1_000_000,
            seed: 0xC0FFEE,
            period_seeds: 64,
            period_window: (1.0, 20.0),
            period_tol: 1e-3,
        }
    }
}

/// Assemble, solve, fit and predict.
pub fn weyl_report(roots: &RootSystem, b: &MatrixSymbol, p: &WeylParams) -> Result<WeylReport, SpectralError> {
    let speed = min_root_speed(&roots.roots, 4096, p.seed)?;
    let corrupt = 0.5 * speed * p.cutoff as f64;
    let window = p.window.unwrap_or((0.2 * speed * p.cutoff as f64, corrupt));
    if window.1 > corrupt * (1.0 + 1e-12) {
        return Err(SpectralError::Window(format!("window end {} exceeds the truncation zone 0.5·speed·K = {corrupt}", window.1)));
    }
    let g = assemble(roots, b, p.cutoff)?;
    let evs = eigenvalues(&g)?;
    let fit = weyl_fit(&evs, g.n, window, p.points)?;
    let prediction = weyl_predict(&roots.roots, p.samples, p.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ 0x9e37);
    let seeds: Vec<_> = (0..p.period_seeds).map(|_| random_cosphere_point(g.n, &mut rng)).collect();
    let periodic_fraction = detect_periods(roots, &seeds, p.period_window, p.period_tol, &FlowParams::default())?.fraction;
    let lambda: Vec<f64> = (0..p.points).map(|i| window.0 + (window.1 - window.0) * i as f64 / (p.points - 1) as f64).collect();
    Ok(WeylReport {
        cutoff: p.cutoff,
        dim: g.dim(),
        counts: lambda.iter().map(|&l| counting(&evs, l)).collect(),
        lambda,
        eigenvalues: evs,
        rel_error: (fit.c_n - prediction).abs() / prediction,
        fit,
        prediction,
        periodic_fraction,
        second_term_reliable: periodic_fraction < PERIODIC_FLAG,
        raw_asymmetry: g.raw_asymmetry,
    })
}
