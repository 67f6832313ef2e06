//! Matrix principal symbols, their characteristic roots, and Condition C.
//!
//! Condition C asks that wherever two non-identical roots a_j, a_k meet,
//! some iterated bracket H_{a_j}^λ a_k with λ ≤ M is non-zero. The scan in
//! [`condition_c`] finds multiplicity points on the cosphere bundle by line
//! searches in x₁ and certifies the least such λ at each of them.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::symdsl::{
    iterated_bracket_capped, parse, BracketError, EvalError, EvalMode, ParseError, PhasePoint, SymbolExpr,
    DEFAULT_BRACKET_CAP,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CharError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("matrix shape: {0}")]
    Shape(String),
    #[error("eigensolve failed: residual {0:e}")]
    Numerical(f64),
    #[error("branch assignment is ambiguous at path index {index} (gap {gap:e})")]
    Ambiguity { index: usize, gap: f64 },
    #[error("not Hermitian: deviation {0:e}")]
    NotHermitian(f64),
}

/// A complex-valued symbol re + i·im.
#[derive(Debug, Clone)]
pub struct ComplexSymbol {
    pub re: SymbolExpr,
    pub im: Option<SymbolExpr>,
}

impl ComplexSymbol {
    pub fn real(re: SymbolExpr) -> Self {
        ComplexSymbol { re, im: None }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.as_ref().is_none_or(|e| e.is_zero())
    }

    pub fn depends_on_x(&self) -> bool {
        self.re.depends_on_x() || self.im.as_ref().is_some_and(|e| e.depends_on_x())
    }

    pub fn depends_on_xi(&self) -> bool {
        self.re.depends_on_xi() || self.im.as_ref().is_some_and(|e| e.depends_on_xi())
    }

    pub fn depends_on_t(&self) -> bool {
        self.re.depends_on_t() || self.im.as_ref().is_some_and(|e| e.depends_on_t())
    }

    pub fn eval_at(&self, x: &[f64], xi: &[f64], t: f64, mode: EvalMode) -> Result<C64, EvalError> {
        let re = self.re.eval_at(x, xi, t, mode)?;
        let im = match &self.im {
            Some(e) => e.eval_at(x, xi, t, mode)?,
            None => 0.0,
        };
        Ok(C64::new(re, im))
    }
}

/// An m×m matrix of symbols with a nominal order.
#[derive(Debug, Clone)]
pub struct MatrixSymbol {
    m: usize,
    n: usize,
    order: i32,
    entries: Vec<ComplexSymbol>,
}

impl MatrixSymbol {
    pub fn new(m: usize, n: usize, order: i32, entries: Vec<ComplexSymbol>) -> Result<Self, CharError> {
        if m == 0 || entries.len() != m * m {
            return Err(CharError::Shape(format!("{} entries for m = {m}", entries.len())));
        }
        Ok(MatrixSymbol { m, n, order, entries })
    }

    pub fn zeros(m: usize, n: usize, order: i32) -> Self {
        let zero = ComplexSymbol::real(SymbolExpr::constant(0.0, n));
        MatrixSymbol { m, n, order, entries: vec![zero; m * m] }
    }

    pub fn diagonal(roots: &[SymbolExpr], order: i32) -> Self {
        let n = roots.iter().map(|r| r.dim()).max().unwrap_or(1);
        let mut a = Self::zeros(roots.len(), n, order);
        for (i, r) in roots.iter().enumerate() {
            a.set(i, i, ComplexSymbol::real(r.clone()));
        }
        a
    }

    /// Parses rows of DSL strings; `im` optionally supplies imaginary parts.
    pub fn parse(re: &[Vec<String>], im: Option<&[Vec<String>]>, n: usize, order: i32) -> Result<Self, CharError> {
        let m = re.len();
        let square = |rows: &[Vec<String>]| rows.len() == m && rows.iter().all(|r| r.len() == m);
        if !square(re) || im.is_some_and(|rows| !square(rows)) {
            return Err(CharError::Shape("rows must form a square matrix".into()));
        }
        let mut entries = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                let re = parse(&re[i][j], n)?;
                let im = match im {
                    Some(rows) => Some(parse(&rows[i][j], n)?).filter(|e| !e.is_zero()),
                    None => None,
                };
                entries.push(ComplexSymbol { re, im });
            }
        }
        Self::new(m, n, order, entries)
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> i32 {
        self.order
    }

    pub fn entry(&self, i: usize, j: usize) -> &ComplexSymbol {
        &self.entries[i * self.m + j]
    }

    pub fn set(&mut self, i: usize, j: usize, e: ComplexSymbol) {
        self.entries[i * self.m + j] = e;
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.is_zero())
    }

    pub fn depends_on_t(&self) -> bool {
        self.entries.iter().any(|e| e.depends_on_t())
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.m).all(|i| (0..self.m).all(|j| i == j || self.entry(i, j).is_zero()))
    }

    pub fn eval_at(&self, x: &[f64], xi: &[f64], t: f64, mode: EvalMode) -> Result<DMatrix<C64>, EvalError> {
        let mut out = DMatrix::zeros(self.m, self.m);
        for i in 0..self.m {
            for j in 0..self.m {
                out[(i, j)] = self.entry(i, j).eval_at(x, xi, t, mode)?;
            }
        }
        Ok(out)
    }

    pub fn eval(&self, p: &PhasePoint) -> Result<DMatrix<C64>, EvalError> {
        self.eval_at(p.x(), p.xi(), 0.0, EvalMode::Exact)
    }

    /// Largest ‖A − A*‖ over the points, relative to max(1, ‖A‖).
    pub fn hermitian_defect(&self, points: &[PhasePoint]) -> Result<f64, EvalError> {
        let mut worst: f64 = 0.0;
        for p in points {
            let a = self.eval(p)?;
            let dev = (&a - a.adjoint()).norm();
            worst = worst.max(dev / a.norm().max(1.0));
        }
        Ok(worst)
    }
}

/// Spectral decomposition A(p) = Σ a_j P_j.
#[derive(Debug, Clone)]
pub struct Eigs {
    pub values: Vec<f64>,
    pub projectors: Vec<DMatrix<C64>>,
}

pub fn eigs_of(a: &DMatrix<C64>) -> Result<Eigs, CharError> {
    let herm = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let dec = herm.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| dec.eigenvalues[i].total_cmp(&dec.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| dec.eigenvalues[i]).collect();
    let projectors: Vec<DMatrix<C64>> = order
        .iter()
        .map(|&i| {
            let v = dec.eigenvectors.column(i);
            v * v.adjoint()
        })
        .collect();
    let mut rebuilt = DMatrix::<C64>::zeros(a.nrows(), a.ncols());
    for (v, p) in values.iter().zip(&projectors) {
        rebuilt += p * C64::new(*v, 0.0);
    }
    let residual = (&rebuilt - a).norm();
    if !residual.is_finite() || residual > 1e-10 * a.norm().max(f64::MIN_POSITIVE) + 1e-300 {
        return Err(CharError::Numerical(residual));
    }
    Ok(Eigs { values, projectors })
}

/// Eigenvalues (ascending) and rank-one projectors of a Hermitian symbol at `p`.
pub fn eigs(a: &MatrixSymbol, p: &PhasePoint) -> Result<Eigs, CharError> {
    eigs_of(&a.eval(p)?)
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; m], &mut out);
    out
}

/// Continuous eigenvalue branches along a path.
#[derive(Debug, Clone, Serialize)]
pub struct Branches {
    /// `values[j][i]` is branch j at path point i.
    pub values: Vec<Vec<f64>>,
    /// Path indices where two eigenvalues came within `gap_tol`.
    pub crossings: Vec<usize>,
}

/// Follows the eigenvalues of `a` along `path`. Each new point is matched to
/// the polynomial extrapolation of the previous (up to three) values by the
/// permutation of least squared displacement.
pub fn track_branches(a: &MatrixSymbol, path: &[PhasePoint], gap_tol: f64) -> Result<Branches, CharError> {
    let m = a.size();
    if m > 6 {
        return Err(CharError::Shape(format!("branch tracking supports m ≤ 6, got {m}")));
    }
    let perms = permutations(m);
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(path.len()); m];
    let mut crossings = Vec::new();
    for (idx, p) in path.iter().enumerate() {
        let cur = eigs(a, p)?.values;
        let scale = cur.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        let gap = cur.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if gap < gap_tol * scale {
            crossings.push(idx);
        }
        if idx == 0 {
            for (j, v) in cur.iter().enumerate() {
                values[j].push(*v);
            }
            continue;
        }
        let predict = |j: usize| {
            let h = &values[j];
            match h.len() {
                1 => h[0],
                2 => 2.0 * h[1] - h[0],
                l => 3.0 * h[l - 1] - 3.0 * h[l - 2] + h[l - 3],
            }
        };
        let pred: Vec<f64> = (0..m).map(predict).collect();
        let mut scored: Vec<(f64, &Vec<usize>)> = perms
            .iter()
            .map(|perm| (perm.iter().enumerate().map(|(j, &c)| (pred[j] - cur[c]).powi(2)).sum::<f64>(), perm))
            .collect();
        scored.sort_by(|x, y| x.0.total_cmp(&y.0));
        let (best_cost, best) = scored[0];
        let tied = scored[1..].iter().take_while(|(c, _)| *c - best_cost <= 1e-12 * (scale * scale + best_cost));
        // A tie matters only between branches whose histories can be told apart.
        let same_history = |a: usize, b: usize| {
            values[a].iter().zip(&values[b]).all(|(u, v)| (u - v).abs() <= gap_tol * scale)
        };
        for (_, other) in tied {
            let moved: Vec<usize> = (0..m).filter(|&j| (cur[other[j]] - cur[best[j]]).abs() > gap_tol * scale).collect();
            if moved.iter().any(|&a| moved.iter().any(|&b| !same_history(a, b))) {
                return Err(CharError::Ambiguity { index: idx, gap });
            }
        }
        for (j, &c) in best.iter().enumerate() {
            values[j].push(cur[c]);
        }
    }
    Ok(Branches { values, crossings })
}

/// Two roots that differ somewhere, with the sample where they differ most.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub groups: (usize, usize),
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub difference: f64,
}

/// Characteristic roots partitioned into groups of identical roots.
#[derive(Debug, Clone)]
pub struct RootSystem {
    pub roots: Vec<SymbolExpr>,
    /// Root indices per group, each ascending, groups ordered by first index.
    pub groups: Vec<Vec<usize>>,
    pub witnesses: Vec<Witness>,
}

impl RootSystem {
    /// Singleton groups, without sampling.
    pub fn distinct(roots: Vec<SymbolExpr>) -> Self {
        let groups = (0..roots.len()).map(|i| vec![i]).collect();
        RootSystem { roots, groups, witnesses: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.roots.iter().map(|r| r.dim()).max().unwrap_or(1)
    }

    /// Representative root ã_i of each group.
    pub fn blocks(&self) -> Vec<&SymbolExpr> {
        self.groups.iter().map(|g| &self.roots[g[0]]).collect()
    }

    pub fn group_of(&self, root: usize) -> usize {
        self.groups.iter().position(|g| g.contains(&root)).expect("every root belongs to a group")
    }
}

const SAME_TOL: f64 = 1e-10;

/// Groups identical roots: equal to 1e−10 at every sample.
pub fn group_roots(roots: &[SymbolExpr], samples: &[PhasePoint]) -> RootSystem {
    let values: Vec<Vec<Option<f64>>> =
        roots.iter().map(|r| samples.iter().map(|p| r.eval(p).ok()).collect()).collect();
    let same = |i: usize, j: usize| {
        values[i].iter().zip(&values[j]).all(|(a, b)| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() <= SAME_TOL,
            (None, None) => true,
            _ => false,
        })
    };
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..roots.len() {
        match groups.iter_mut().find(|g| same(g[0], i)) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    let mut witnesses = Vec::new();
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            let (i, j) = (groups[a][0], groups[b][0]);
            let best = (0..samples.len())
                .filter_map(|s| Some((s, (values[i][s]? - values[j][s]?).abs())))
                .max_by(|x, y| x.1.total_cmp(&y.1));
            if let Some((s, difference)) = best {
                witnesses.push(Witness {
                    groups: (a, b),
                    x: samples[s].x().to_vec(),
                    xi: samples[s].xi().to_vec(),
                    difference,
                });
            }
        }
    }
    RootSystem { roots: roots.to_vec(), groups, witnesses }
}

/// Points on the cosphere bundle: a regular grid in x (and in the angle of ξ when n = 2).
pub fn cosphere_samples(n: usize, per_axis: usize) -> Vec<PhasePoint> {
    let h = TAU / per_axis as f64;
    match n {
        1 => (0..per_axis)
            .flat_map(|i| [1.0, -1.0].map(|s| PhasePoint::one_dim(i as f64 * h + 0.1 * h, s).expect("ξ = ±1")))
            .collect(),
        _ => {
            let mut out = Vec::with_capacity(per_axis.pow(3));
            for i in 0..per_axis {
                for j in 0..per_axis {
                    for k in 0..per_axis {
                        let th = k as f64 * h + 0.05;
                        let x = [i as f64 * h + 0.1 * h, j as f64 * h + 0.2 * h];
                        out.push(PhasePoint::new(&x, &[th.cos(), th.sin()]).expect("unit covector"));
                    }
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionCParams {
    pub cap: u32,
    /// Line-search samples in x₁ (and in x₂ and the angle of ξ when n = 2).
    pub resolution: usize,
    /// Multiplicity threshold relative to the local symbol scale.
    pub mult_tol: f64,
    pub bracket_tol: f64,
}

impl Default for ConditionCParams {
    fn default() -> Self {
        ConditionCParams { cap: DEFAULT_BRACKET_CAP, resolution: 64, mult_tol: 1e-6, bracket_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "order", rename_all = "lowercase")]
pub enum PairStatus {
    Strict,
    Order(u32),
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiplicityPoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    /// Least λ with a non-vanishing bracket; `None` when the cap is exhausted.
    pub lambda: Option<u32>,
    /// Normalized brackets |H^λ a_k|/|ξ|^deg for λ = 1..=λ*.
    pub brackets: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairReport {
    pub j: usize,
    pub k: usize,
    pub status: PairStatus,
    pub points: Vec<MultiplicityPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BracketReport {
    pub pairs: Vec<PairReport>,
    /// Global order M; `None` means FAIL.
    #[serde(rename = "M")]
    pub m: Option<u32>,
    pub params: ConditionCParams,
}

impl BracketReport {
    pub fn failed(&self) -> bool {
        self.m.is_none()
    }
}

/// One line of the multiplicity search: x₁ ↦ (x₁, x₂, ξ).
struct Line<'a> {
    fixed_x: Vec<f64>,
    xi: Vec<f64>,
    aj: &'a SymbolExpr,
    ak: &'a SymbolExpr,
}

impl Line<'_> {
    fn at(&self, x1: f64) -> Vec<f64> {
        let mut x = self.fixed_x.clone();
        x[0] = x1;
        x
    }

    fn diff(&self, x1: f64) -> Option<(f64, f64, f64)> {
        let x = self.at(x1);
        let ja = self.aj.jet_at(&x, &self.xi, 0.0, EvalMode::Exact).ok()?;
        let jb = self.ak.jet_at(&x, &self.xi, 0.0, EvalMode::Exact).ok()?;
        let scale = ja.value.abs().max(jb.value.abs()).max(f64::MIN_POSITIVE);
        Some((ja.value - jb.value, ja.dx[0] - jb.dx[0], scale))
    }

    fn bisect(&self, mut lo: f64, mut hi: f64, f: impl Fn(f64) -> Option<f64>) -> Option<f64> {
        let mut flo = f(lo)?;
        for _ in 0..200 {
            if hi - lo <= 1e-15 * (1.0 + lo.abs()) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let fm = f(mid)?;
            if fm == 0.0 {
                return Some(mid);
            }
            if (fm > 0.0) == (flo > 0.0) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// Zeros of a_j − a_k on x₁ ∈ [0, 2π): sign changes, grid-exact zeros and touching minima.
    fn zeros(&self, samples: usize, mult_tol: f64) -> Vec<f64> {
        let h = TAU / samples as f64;
        let vals: Vec<Option<(f64, f64, f64)>> = (0..=samples).map(|i| self.diff(i as f64 * h)).collect();
        let mut out = Vec::new();
        for i in 0..samples {
            let (Some(a), Some(b)) = (vals[i], vals[i + 1]) else { continue };
            let (x0, x1) = (i as f64 * h, (i + 1) as f64 * h);
            if a.0.abs() <= mult_tol * a.2 {
                out.push(x0);
                continue;
            }
            if b.0.abs() <= mult_tol * b.2 {
                continue;
            }
            if (a.0 > 0.0) != (b.0 > 0.0) {
                if let Some(z) = self.bisect(x0, x1, |s| self.diff(s).map(|d| d.0)) {
                    out.push(z);
                }
            } else if (a.1 > 0.0) != (b.1 > 0.0) && (a.0 > 0.0) == (a.1 < 0.0) {
                // |d| decreases into the cell and increases out of it
                if let Some(c) = self.bisect(x0, x1, |s| self.diff(s).map(|d| d.1)) {
                    if let Some(d) = self.diff(c) {
                        if d.0.abs() <= mult_tol * d.2 {
                            out.push(c);
                        }
                    }
                }
            }
        }
        out
    }
}

fn order_at(
    aj: &SymbolExpr,
    ak: &SymbolExpr,
    p: &PhasePoint,
    params: &ConditionCParams,
) -> Result<(Option<u32>, Vec<f64>), BracketError> {
    let d = aj.homogeneity().unwrap_or(1.0);
    let mut brackets = Vec::new();
    for lambda in 1..=params.cap {
        let v = iterated_bracket_capped(aj, ak, lambda, p, params.cap)?;
        let degree = ak.homogeneity().unwrap_or(1.0) + lambda as f64 * (d - 1.0);
        let normalized = v.abs() / p.xi_norm().powf(degree);
        brackets.push(normalized);
        if normalized > params.bracket_tol {
            return Ok((Some(lambda), brackets));
        }
    }
    Ok((None, brackets))
}

fn line_family(n: usize, resolution: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    match n {
        1 => vec![(vec![0.0], vec![1.0]), (vec![0.0], vec![-1.0])],
        _ => {
            let h = TAU / resolution as f64;
            let mut out = Vec::new();
            for j in 0..resolution {
                for k in 0..resolution {
                    let th = k as f64 * h;
                    out.push((vec![0.0, j as f64 * h], vec![th.cos(), th.sin()]));
                }
            }
            out
        }
    }
}

/// Multiplicity points of a_j = a_k on the cosphere bundle.
pub fn multiplicity_points(aj: &SymbolExpr, ak: &SymbolExpr, params: &ConditionCParams) -> Vec<PhasePoint> {
    let n = aj.dim().max(ak.dim());
    let found: Vec<PhasePoint> = line_family(n, params.resolution)
        .into_par_iter()
        .flat_map_iter(|(fixed_x, xi)| {
            let line = Line { fixed_x, xi, aj, ak };
            line.zeros(params.resolution, params.mult_tol)
                .into_iter()
                .filter_map(|x1| PhasePoint::new(&line.at(x1), &line.xi).ok())
                .collect::<Vec<_>>()
        })
        .collect();
    let mut unique: Vec<PhasePoint> = Vec::new();
    for p in found {
        let close = |q: &PhasePoint| {
            let dx: f64 = p.x().iter().zip(q.x()).map(|(a, b)| {
                let d = (a - b).abs();
                d.min(TAU - d)
            }).fold(0.0, f64::max);
            let dxi: f64 = p.xi().iter().zip(q.xi()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            dx < 1e-7 && dxi < 1e-12
        };
        if !unique.iter().any(close) {
            unique.push(p);
        }
    }
    unique
}

/// Certifies Condition C for every cross-group pair of a root system.
pub fn condition_c(roots: &RootSystem, params: &ConditionCParams) -> BracketReport {
    let mut pairs = Vec::new();
    let mut global = Some(0u32);
    for a in 0..roots.groups.len() {
        for b in a + 1..roots.groups.len() {
            let (j, k) = (roots.groups[a][0], roots.groups[b][0]);
            let (aj, ak) = (&roots.roots[j], &roots.roots[k]);
            let points: Vec<MultiplicityPoint> = multiplicity_points(aj, ak, params)
                .par_iter()
                .map(|p| {
                    let (lambda, brackets) = order_at(aj, ak, p, params).unwrap_or((None, Vec::new()));
                    MultiplicityPoint { x: p.x().to_vec(), xi: p.xi().to_vec(), lambda, brackets }
                })
                .collect();
            let status = if points.is_empty() {
                PairStatus::Strict
            } else if points.iter().any(|p| p.lambda.is_none()) {
                PairStatus::Fail
            } else {
                PairStatus::Order(points.iter().filter_map(|p| p.lambda).max().unwrap_or(0))
            };
            global = match (global, status) {
                (Some(g), PairStatus::Strict) => Some(g),
                (Some(g), PairStatus::Order(l)) => Some(g.max(l)),
                _ => None,
            };
            pairs.push(PairReport { j, k, status, points });
        }
    }
    BracketReport { pairs, m: global, params: *params }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SmoothingError {
    #[error("l and M must be at least 1")]
    Domain,
    #[error("the formula's denominator vanishes")]
    ZeroDenominator,
}

/// N(l, M, n) = ((−3n/2 − 2)(3⌊l/2⌋ − 1 − n) + (⌊l/2⌋ − n − 1)(l/(2M) − n − 1))
///             / (3⌊l/2⌋ − 2n − 2 + l/(2M)), exactly.
pub fn theoretical_smoothing(l: u64, m: u64, n: u64) -> Result<Ratio<i128>, SmoothingError> {
    if l == 0 || m == 0 {
        return Err(SmoothingError::Domain);
    }
    let r = |v: i128| Ratio::from_integer(v);
    let (l, m, n) = (l as i128, m as i128, n as i128);
    let half = r(l / 2);
    let lm = Ratio::new(l, 2 * m);
    let num = (Ratio::new(-3 * n, 2) - r(2)) * (r(3) * half - r(1) - r(n)) + (half - r(n) - r(1)) * (lm - r(n) - r(1));
    let den = r(3) * half - r(2 * n) - r(2) + lm;
    if den == r(0) {
        return Err(SmoothingError::ZeroDenominator);
    }
    Ok(num / den)
}
