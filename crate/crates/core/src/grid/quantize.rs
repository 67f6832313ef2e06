//! Kohn–Nirenberg quantization on a periodic grid.
//!
//! On the grid, (Op(a)u)(x_j) = Σ_k a(x_j, k) û_k e^{ik·x_j}. Expanding the
//! x-profile a(·, k) in its own discrete Fourier series â_q(k) turns this
//! into (Op(a)u)^_{k+q} = Σ_q â_q(k) û_k, with k + q taken modulo the grid.
//! The identity is exact on the grid; shifts whose coefficients vanish to
//! rounding are dropped, so smooth band-limited symbols cost a few passes
//! over the spectrum per application.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use super::{to_spectral, Grid, SpectralField, VectorField};
use crate::characteristics::{ComplexSymbol, MatrixSymbol};
use crate::symdsl::{EvalError, EvalMode, SymbolExpr};

/// Shifts with max |â_q| below this fraction of the largest are dropped.
const DROP: f64 = 1e-16;

#[derive(Debug, Clone)]
struct Term {
    shift: Vec<i64>,
    /// â_q(k) for every mode k.
    coeffs: Vec<C64>,
    /// Flat index of k + q; empty for q = 0.
    target: Vec<usize>,
}

impl Term {
    fn new(grid: &Grid, shift: Vec<i64>, coeffs: Vec<C64>) -> Self {
        let target = if shift.iter().all(|&q| q == 0) {
            Vec::new()
        } else {
            (0..grid.len())
                .map(|i| {
                    let k: Vec<i64> = grid.mode(i).iter().zip(&shift).map(|(a, b)| a + b).collect();
                    grid.index_of(&k)
                })
                .collect()
        };
        Term { shift, coeffs, target }
    }
}

/// A quantized scalar symbol as a sum of shifted multipliers.
#[derive(Debug, Clone)]
pub struct QuantizedOp {
    grid: Grid,
    terms: Vec<Term>,
}

fn freq(grid: &Grid, idx: usize) -> Vec<f64> {
    grid.mode(idx).iter().map(|&k| k as f64).collect()
}

impl QuantizedOp {
    pub fn new(a: &ComplexSymbol, grid: &Grid, t: f64) -> Result<Self, EvalError> {
        let mode = EvalMode::Regularized;
        let len = grid.len();
        let origin = vec![0.0; grid.dim()];
        if !a.depends_on_x() {
            let coeffs = (0..len).map(|i| a.eval_at(&origin, &freq(grid, i), t, mode)).collect::<Result<_, _>>()?;
            return Ok(QuantizedOp { grid: grid.clone(), terms: vec![Term::new(grid, vec![0; grid.dim()], coeffs)] });
        }
        let points = grid.points();
        let profile = |xi: &[f64]| -> Result<Vec<C64>, EvalError> {
            let vals = points.iter().map(|x| a.eval_at(x, xi, t, mode)).collect::<Result<Vec<_>, _>>()?;
            Ok(to_spectral(grid, &vals).expect("profile has grid length"))
        };
        // columns[k][q] = â_q(k)
        let columns: Vec<Vec<C64>> = if a.depends_on_xi() {
            (0..len).into_par_iter().map(|i| profile(&freq(grid, i))).collect::<Result<_, _>>()?
        } else {
            vec![profile(&origin)?; 1]
        };
        let largest = columns.iter().flatten().fold(0.0f64, |m, c| m.max(c.norm()));
        let mut terms = Vec::new();
        for q in 0..len {
            let peak = columns.iter().fold(0.0f64, |m, col| m.max(col[q].norm()));
            if peak > DROP * largest {
                let coeffs = if columns.len() == 1 { vec![columns[0][q]; len] } else { columns.iter().map(|c| c[q]).collect() };
                terms.push(Term::new(grid, grid.mode(q), coeffs));
            }
        }
        Ok(QuantizedOp { grid: grid.clone(), terms })
    }

    pub fn from_symbol(a: &SymbolExpr, grid: &Grid, t: f64) -> Result<Self, EvalError> {
        Self::new(&ComplexSymbol::real(a.clone()), grid, t)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// True when the operator is a Fourier multiplier.
    pub fn is_multiplier(&self) -> bool {
        self.terms.len() == 1 && self.terms[0].target.is_empty()
    }

    pub fn shift_count(&self) -> usize {
        self.terms.len()
    }

    /// Multiplier values when [`Self::is_multiplier`] holds.
    pub fn multiplier(&self) -> Option<&[C64]> {
        self.is_multiplier().then(|| self.terms[0].coeffs.as_slice())
    }

    /// Applies the operator to Fourier coefficients, accumulating into `out`.
    pub fn apply_add(&self, spec: &[C64], scale: C64, out: &mut [C64]) {
        for term in &self.terms {
            if term.target.is_empty() {
                for ((o, c), u) in out.iter_mut().zip(&term.coeffs).zip(spec) {
                    *o += scale * c * u;
                }
            } else {
                for ((&to, c), u) in term.target.iter().zip(&term.coeffs).zip(spec) {
                    out[to] += scale * c * u;
                }
            }
        }
    }

    /// Shifts q present in the expansion.
    pub fn shifts(&self) -> impl Iterator<Item = &[i64]> {
        self.terms.iter().map(|t| t.shift.as_slice())
    }

    /// The L² adjoint on the grid: shift −q with coefficients conj(â_q(k′ − q)).
    pub fn adjoint(&self) -> Self {
        let g = &self.grid;
        let terms = self
            .terms
            .iter()
            .map(|term| {
                let neg: Vec<i64> = term.shift.iter().map(|q| -q).collect();
                let coeffs = (0..g.len())
                    .map(|i| {
                        let k: Vec<i64> = g.mode(i).iter().zip(&neg).map(|(a, b)| a + b).collect();
                        term.coeffs[g.index_of(&k)].conj()
                    })
                    .collect();
                Term::new(g, neg, coeffs)
            })
            .collect();
        QuantizedOp { grid: g.clone(), terms }
    }

    /// ½(Op + Op*), terms with equal shifts merged.
    pub fn hermitian_part(&self) -> Self {
        let g = &self.grid;
        let mut merged: Vec<(Vec<i64>, Vec<C64>)> = Vec::new();
        for term in self.terms.iter().chain(self.adjoint().terms.iter()) {
            let half = term.coeffs.iter().map(|c| c * 0.5);
            match merged.iter_mut().find(|(q, _)| g.index_of(q) == g.index_of(&term.shift)) {
                Some((_, acc)) => acc.iter_mut().zip(half).for_each(|(a, b)| *a += b),
                None => merged.push((term.shift.clone(), half.collect())),
            }
        }
        QuantizedOp { grid: g.clone(), terms: merged.into_iter().map(|(q, c)| Term::new(g, q, c)).collect() }
    }

    /// Upper bound on the spectral radius: the largest column sum Σ_q |â_q(k)|.
    pub fn norm_bound(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| self.terms.iter().map(|t| t.coeffs[i].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn apply_spec(&self, spec: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); spec.len()];
        self.apply_add(spec, C64::new(1.0, 0.0), &mut out);
        out
    }
}

/// A quantized matrix symbol; zero entries are skipped.
#[derive(Debug, Clone)]
pub struct QuantizedMatrix {
    m: usize,
    entries: Vec<Option<QuantizedOp>>,
}

impl QuantizedMatrix {
    pub fn new(a: &MatrixSymbol, grid: &Grid, t: f64) -> Result<Self, EvalError> {
        let m = a.size();
        let mut entries = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                let e = a.entry(i, j);
                entries.push(if e.is_zero() { None } else { Some(QuantizedOp::new(e, grid, t)?) });
            }
        }
        Ok(QuantizedMatrix { m, entries })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn entry(&self, i: usize, j: usize) -> Option<&QuantizedOp> {
        self.entries[i * self.m + j].as_ref()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.is_none())
    }

    /// Accumulates `scale · Op(A)u` into `out`.
    pub fn apply_add(&self, spec: &[Vec<C64>], scale: C64, out: &mut [Vec<C64>]) {
        for i in 0..self.m {
            for j in 0..self.m {
                if let Some(op) = self.entry(i, j) {
                    op.apply_add(&spec[j], scale, &mut out[i]);
                }
            }
        }
    }

    pub fn adjoint(&self) -> Self {
        let m = self.m;
        let entries = (0..m * m).map(|idx| self.entries[(idx % m) * m + idx / m].as_ref().map(|op| op.adjoint())).collect();
        QuantizedMatrix { m, entries }
    }

    /// Sets the diagonal to zero.
    pub fn without_diagonal(mut self) -> Self {
        for i in 0..self.m {
            self.entries[i * self.m + i] = None;
        }
        self
    }

    pub fn apply_spec(&self, spec: &[Vec<C64>]) -> Vec<Vec<C64>> {
        let len = spec.first().map_or(0, |s| s.len());
        let mut out = vec![vec![C64::new(0.0, 0.0); len]; self.m];
        self.apply_add(spec, C64::new(1.0, 0.0), &mut out);
        out
    }
}

/// Op(a)u by the Kohn–Nirenberg rule.
pub fn apply_op(a: &SymbolExpr, u: &SpectralField) -> Result<SpectralField, EvalError> {
    let op = QuantizedOp::from_symbol(a, u.grid(), 0.0)?;
    Ok(SpectralField::from_spectral(u.grid(), op.apply_spec(u.spec())).expect("grid length preserved"))
}

/// Op(A)u for a matrix symbol.
pub fn apply_matrix_op(a: &MatrixSymbol, u: &VectorField) -> Result<VectorField, EvalError> {
    assert_eq!(a.size(), u.len(), "matrix size must match the component count");
    let op = QuantizedMatrix::new(a, u.grid(), 0.0)?;
    Ok(VectorField::from_spectral(u.grid(), op.apply_spec(&u.spectra())).expect("grid length preserved"))
}

/// Op(a)u by direct double summation over grid points and modes.
pub fn apply_op_direct(a: &SymbolExpr, u: &SpectralField) -> Result<SpectralField, EvalError> {
    let g = u.grid();
    let modes = g.modes();
    let phys = g
        .points()
        .par_iter()
        .map(|x| {
            let mut acc = C64::new(0.0, 0.0);
            for (k, c) in modes.iter().zip(u.spec()) {
                let kf: Vec<f64> = k.iter().map(|&v| v as f64).collect();
                let phase: f64 = kf.iter().zip(x).map(|(a, b)| a * b).sum();
                acc += a.eval_at(x, &kf, 0.0, EvalMode::Regularized)? * c * C64::from_polar(1.0, phase);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(SpectralField::from_physical(g, phys).expect("grid length preserved"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symdsl::parse;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &Grid, seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phys = (0..grid.len()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        SpectralField::from_physical(grid, phys).unwrap()
    }

    fn max_diff(a: &SpectralField, b: &SpectralField) -> f64 {
        a.phys().iter().zip(b.phys()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn multiplier_on_plane_wave() {
        let g = Grid::line(64).unwrap();
        let a = parse("norm_xi", 1).unwrap();
        let w = SpectralField::plane_wave(&g, &[5]);
        let out = apply_op(&a, &w).unwrap();
        assert!(max_diff(&out, &w.scale(C64::new(5.0, 0.0))) < 1e-13);
        assert!(QuantizedOp::from_symbol(&a, &g, 0.0).unwrap().is_multiplier());
    }

    #[test]
    fn xi_independent_is_pointwise_product() {
        let g = Grid::line(64).unwrap();
        let u = random_field(&g, 1);
        let out = apply_op(&parse("sin(x1)", 1).unwrap(), &u).unwrap();
        let want = SpectralField::from_physical(
            &g,
            g.points().iter().zip(u.phys()).map(|(x, v)| v * x[0].sin()).collect(),
        )
        .unwrap();
        assert!(max_diff(&out, &want) < 1e-13);
    }

    #[test]
    fn matches_direct_summation() {
        let g = Grid::line(32).unwrap();
        let a = parse("(1+sin(x1)^2)*norm_xi", 1).unwrap();
        let w = SpectralField::plane_wave(&g, &[8]);
        assert!(max_diff(&apply_op(&a, &w).unwrap(), &apply_op_direct(&a, &w).unwrap()) < 1e-10);
        let u = random_field(&g, 2);
        let b = parse("exp(cos(x1))*xi1/jnorm_xi", 1).unwrap();
        assert!(max_diff(&apply_op(&b, &u).unwrap(), &apply_op_direct(&b, &u).unwrap()) < 1e-10);
        let g2 = Grid::new(&[8, 16]).unwrap();
        let c = parse("cos(x1 + 2*x2)*norm_xi + sin(x2)*xi1", 2).unwrap();
        let u2 = random_field(&g2, 3);
        assert!(max_diff(&apply_op(&c, &u2).unwrap(), &apply_op_direct(&c, &u2).unwrap()) < 1e-10);
    }

    #[test]
    fn adjoint_and_hermitian_part() {
        let g = Grid::line(32).unwrap();
        let op = QuantizedOp::from_symbol(&parse("(1+sin(x1)^2)*norm_xi + cos(x1)*xi1", 1).unwrap(), &g, 0.0).unwrap();
        let (u, v) = (random_field(&g, 8), random_field(&g, 9));
        let inner = |a: &[C64], b: &[C64]| a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>();
        let lhs = inner(&op.apply_spec(u.spec()), v.spec());
        let rhs = inner(u.spec(), &op.adjoint().apply_spec(v.spec()));
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
        let h = op.hermitian_part();
        let a = inner(&h.apply_spec(u.spec()), v.spec());
        let b = inner(u.spec(), &h.apply_spec(v.spec()));
        assert!((a - b).norm() < 1e-12 * a.norm().max(1.0));
        let bound = h.norm_bound();
        let w = h.apply_spec(u.spec());
        let norm = |x: &[C64]| x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        assert!(norm(&w) <= bound * norm(u.spec()) * (1.0 + 1e-12));
    }

    #[test]
    fn linearity_and_multiplier_composition() {
        let g = Grid::line(64).unwrap();
        let a = parse("(2+cos(x1))*norm_xi", 1).unwrap();
        let (u, v) = (random_field(&g, 4), random_field(&g, 5));
        let (al, be) = (C64::new(0.3, -1.2), C64::new(2.0, 0.5));
        let lhs = apply_op(&a, &u.scale(al).add(&v.scale(be)).unwrap()).unwrap();
        let rhs = apply_op(&a, &u).unwrap().scale(al).add(&apply_op(&a, &v).unwrap().scale(be)).unwrap();
        assert!(lhs.sub(&rhs).unwrap().l2_norm() <= 1e-12 * lhs.l2_norm());
        let (p, q) = (parse("norm_xi", 1).unwrap(), parse("1/jnorm_xi", 1).unwrap());
        let composed = apply_op(&p, &apply_op(&q, &u).unwrap()).unwrap();
        let product = apply_op(&p.mul(&q), &u).unwrap();
        assert!(composed.sub(&product).unwrap().l2_norm() <= 1e-14 * u.l2_norm());
    }
}
