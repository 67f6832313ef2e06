//! Sublevel-set measures, their decomposition by derivative size, and the
//! Monte-Carlo measure of small composed Egorov symbols.

use std::f64::consts::TAU;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fit::linear_fit;
use crate::geometry::{egorov_all, FlowParams, GeometryError};
use crate::symdsl::{EvalError, EvalMode, PhasePoint, SymbolExpr, Var};

/// Bisection tolerance on set boundaries.
pub const BOUNDARY_TOL: f64 = 1e-10;
/// Components closer than this are merged.
pub const MERGE_GAP: f64 = 1e-12;
/// Largest supported zero order.
pub const MAX_ORDER: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("derivative of order {0} is not available")]
    Derivative(usize),
    #[error("all measures vanish; no exponent can be fitted")]
    DegenerateFit,
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A scalar function of t with derivatives.
pub trait SublevelFn: Sync {
    fn value(&self, t: f64) -> f64;
    /// ∂_t^p f(t).
    fn derivative(&self, t: f64, p: usize) -> Result<f64, MeasureError>;
}

/// Σ c_i tⁱ, coefficients in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    /// ∏ (t − r_i).
    pub fn from_roots(roots: &[f64]) -> Self {
        let mut c = vec![1.0];
        for &r in roots {
            let mut next = vec![0.0; c.len() + 1];
            for (i, &v) in c.iter().enumerate() {
                next[i + 1] += v;
                next[i] -= r * v;
            }
            c = next;
        }
        Polynomial(c)
    }
}

impl SublevelFn for Polynomial {
    fn value(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    fn derivative(&self, t: f64, p: usize) -> Result<f64, MeasureError> {
        let mut acc = 0.0;
        for (i, &c) in self.0.iter().enumerate().skip(p).rev() {
            let falling: f64 = ((i - p + 1)..=i).map(|v| v as f64).product();
            acc = acc * t + c * falling;
        }
        Ok(acc)
    }
}

/// A symbol as a function of t at a fixed phase point, with derivatives by
/// repeated symbolic differentiation in t.
#[derive(Debug, Clone)]
pub struct TimeSymbol {
    derivs: Vec<SymbolExpr>,
    x: Vec<f64>,
    xi: Vec<f64>,
}

impl TimeSymbol {
    pub fn new(a: &SymbolExpr, p: &PhasePoint, max_order: usize) -> Self {
        let mut derivs = vec![a.clone()];
        for _ in 0..max_order {
            let next = derivs.last().expect("non-empty").diff(Var::T);
            derivs.push(next);
        }
        TimeSymbol { derivs, x: p.x().to_vec(), xi: p.xi().to_vec() }
    }
}

impl SublevelFn for TimeSymbol {
    fn value(&self, t: f64) -> f64 {
        self.derivs[0].eval_at(&self.x, &self.xi, t, EvalMode::Regularized).unwrap_or(f64::NAN)
    }

    fn derivative(&self, t: f64, p: usize) -> Result<f64, MeasureError> {
        let d = self.derivs.get(p).ok_or(MeasureError::Derivative(p))?;
        Ok(d.eval_at(&self.x, &self.xi, t, EvalMode::Regularized)?)
    }
}

/// Black-box function with Richardson-extrapolated central differences.
pub struct FiniteDiff<F> {
    pub f: F,
    pub h: f64,
}

impl<F: Fn(f64) -> f64 + Sync> FiniteDiff<F> {
    pub fn new(f: F) -> Self {
        FiniteDiff { f, h: 1e-2 }
    }

    fn central(&self, t: f64, p: usize, h: f64) -> f64 {
        let mut acc = 0.0;
        let mut binom = 1.0;
        for i in 0..=p {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binom * (self.f)(t + (p as f64 / 2.0 - i as f64) * h);
            binom = binom * (p - i) as f64 / (i + 1) as f64;
        }
        acc / h.powi(p as i32)
    }

    /// Extrapolated derivative and the size of the extrapolation correction.
    pub fn derivative_with_error(&self, t: f64, p: usize) -> (f64, f64) {
        if p == 0 {
            return ((self.f)(t), 0.0);
        }
        let (coarse, fine) = (self.central(t, p, self.h), self.central(t, p, self.h / 2.0));
        ((4.0 * fine - coarse) / 3.0, (fine - coarse).abs() / 3.0)
    }
}

impl<F: Fn(f64) -> f64 + Sync> SublevelFn for FiniteDiff<F> {
    fn value(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    fn derivative(&self, t: f64, p: usize) -> Result<f64, MeasureError> {
        if p > MAX_ORDER {
            return Err(MeasureError::Derivative(p));
        }
        Ok(self.derivative_with_error(t, p).0)
    }
}

/// Sorted, disjoint closed intervals.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IntervalSet(pub Vec<(f64, f64)>);

impl IntervalSet {
    pub fn measure(&self) -> f64 {
        self.0.iter().map(|(a, b)| b - a).sum()
    }

    pub fn components(&self) -> usize {
        self.0.len()
    }

    pub fn max_length(&self) -> f64 {
        self.0.iter().map(|(a, b)| b - a).fold(0.0, f64::max)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn merged(mut v: Vec<(f64, f64)>) -> Self {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
        for (a, b) in v {
            match out.last_mut() {
                Some(last) if a - last.1 < MERGE_GAP => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        IntervalSet(out)
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let (mut i, mut j, mut out) = (0, 0, Vec::new());
        while i < self.0.len() && j < other.0.len() {
            let (a, b) = (self.0[i].0.max(other.0[j].0), self.0[i].1.min(other.0[j].1));
            if a <= b {
                out.push((a, b));
            }
            if self.0[i].1 < other.0[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalSet::merged(out)
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        IntervalSet::merged(self.0.iter().chain(&other.0).copied().collect())
    }
}

/// {t ∈ [0, T]: g(t) ≤ 0} from `base` uniform samples, boundaries bisected to 1e−10.
pub fn level_set(g: impl Fn(f64) -> f64, horizon: f64, base: usize) -> IntervalSet {
    let base = base.max(1);
    let inside = |t: f64| g(t) <= 0.0;
    let boundary = |mut lo: f64, mut hi: f64| {
        let lo_in = inside(lo);
        while hi - lo > BOUNDARY_TOL {
            let mid = 0.5 * (lo + hi);
            if inside(mid) == lo_in {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let mut out = Vec::new();
    let mut start = inside(0.0).then_some(0.0);
    let mut prev = (0.0, start.is_some());
    for i in 1..=base {
        let t = horizon * i as f64 / base as f64;
        let now = inside(t);
        if now != prev.1 {
            let b = boundary(prev.0, t);
            match start.take() {
                Some(a) => out.push((a, b)),
                None => start = Some(b),
            }
        }
        prev = (t, now);
    }
    if let Some(a) = start {
        out.push((a, horizon));
    }
    IntervalSet::merged(out)
}

/// meas{t ∈ [0, T]: |f(t)| ≤ ε}.
pub fn sublevel_measure(f: impl Fn(f64) -> f64, horizon: f64, eps: f64, base: usize) -> f64 {
    level_set(|t| f(t).abs() - eps, horizon, base.max(1000)).measure()
}

/// Number of zeros of f on [0, T]: sign changes plus touching zeros, where
/// f′ changes sign and |f| ≤ 1e−10·max|f|.
pub fn count_zeros(f: &dyn SublevelFn, horizon: f64, base: usize) -> usize {
    let ts: Vec<f64> = (0..=base).map(|i| horizon * i as f64 / base as f64).collect();
    let vals: Vec<f64> = ts.iter().map(|&t| f.value(t)).collect();
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut count = vals.iter().filter(|v| **v == 0.0).count();
    for i in 1..=base {
        let (a, b) = (vals[i - 1], vals[i]);
        if a != 0.0 && b != 0.0 && (a > 0.0) != (b > 0.0) {
            count += 1;
            continue;
        }
        let (Ok(da), Ok(db)) = (f.derivative(ts[i - 1], 1), f.derivative(ts[i], 1)) else { continue };
        if a == 0.0 || b == 0.0 || da == 0.0 || db == 0.0 || (da > 0.0) == (db > 0.0) {
            continue;
        }
        let (mut lo, mut hi) = (ts[i - 1], ts[i]);
        while hi - lo > BOUNDARY_TOL {
            let mid = 0.5 * (lo + hi);
            let dm = f.derivative(mid, 1).unwrap_or(0.0);
            if (dm > 0.0) == (da > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if f.value(0.5 * (lo + hi)).abs() <= 1e-10 * scale {
            count += 1;
        }
    }
    count
}

/// α_k = 1 − k/(2M).
pub fn alpha(k: usize, m: usize) -> f64 {
    1.0 - k as f64 / (2.0 * m as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaDecomposition {
    pub eps: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "C")]
    pub c: f64,
    /// α_0, …, α_{M+1}.
    pub alpha: Vec<f64>,
    /// {|f| ≤ Cε}.
    pub sigma: IntervalSet,
    /// Σ^1, …, Σ^M.
    pub parts: Vec<IntervalSet>,
    pub components: Vec<usize>,
    pub max_lengths: Vec<f64>,
    /// Points of Σ where every |∂^i f| ≤ Cε^{α_i}, i ≤ M; empty below ε₀.
    pub residual: IntervalSet,
    /// Σ^{M+1}.
    pub beyond: IntervalSet,
}

impl SigmaDecomposition {
    /// |meas Σ − Σ_p meas Σ^p|.
    pub fn cover_defect(&self) -> f64 {
        (self.sigma.measure() - self.parts.iter().map(IntervalSet::measure).sum::<f64>()).abs()
    }
}

/// Σ^p = {|f| ≤ Cε, …, |∂^{p−1}f| ≤ Cε^{α_{p−1}}, |∂^p f| ≥ Cε^{α_p}} for p = 1..=M.
pub fn sigma_decomposition(f: &dyn SublevelFn, horizon: f64, eps: f64, m: usize, c: f64, base: usize) -> Result<SigmaDecomposition, MeasureError> {
    if m == 0 || m > MAX_ORDER {
        return Err(MeasureError::Domain(format!("M must be in 1..={MAX_ORDER}, got {m}")));
    }
    for p in 0..=m + 1 {
        f.derivative(0.0, p)?;
    }
    let alpha: Vec<f64> = (0..=m + 1).map(|k| alpha(k, m)).collect();
    let bound = |i: usize| c * eps.powf(alpha[i]);
    let le: Vec<IntervalSet> = (0..=m + 1)
        .map(|i| level_set(|t| f.derivative(t, i).unwrap_or(f64::NAN).abs() - bound(i), horizon, base))
        .collect();
    let ge = |p: usize| level_set(|t| bound(p) - f.derivative(t, p).unwrap_or(f64::NAN).abs(), horizon, base);
    let mut prefix = le[0].clone();
    let mut parts = Vec::with_capacity(m);
    for p in 1..=m {
        parts.push(prefix.intersect(&ge(p)));
        prefix = prefix.intersect(&le[p]);
    }
    let beyond = prefix.intersect(&ge(m + 1));
    Ok(SigmaDecomposition {
        eps,
        m,
        c,
        components: parts.iter().map(IntervalSet::components).collect(),
        max_lengths: parts.iter().map(IntervalSet::max_length).collect(),
        alpha,
        sigma: le[0].clone(),
        parts,
        residual: prefix,
        beyond,
    })
}

/// Largest ε of the ladder at and below which every residual set is empty.
pub fn locate_eps0(f: &dyn SublevelFn, horizon: f64, m: usize, c: f64, ladder: &[f64], base: usize) -> Result<Option<f64>, MeasureError> {
    let mut sorted = ladder.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut found = None;
    for &eps in &sorted {
        if sigma_decomposition(f, horizon, eps, m, c, base)?.residual.is_empty() {
            found = Some(eps);
        } else {
            break;
        }
    }
    Ok(found)
}

/// Least-squares slope of log measure against log ε over the positive measures.
pub fn fit_decay_exponent(eps: &[f64], measures: &[f64]) -> Result<f64, MeasureError> {
    if eps.len() != measures.len() || eps.len() < 5 {
        return Err(MeasureError::Domain(format!("need at least 5 (ε, measure) pairs, got {}", eps.len().min(measures.len()))));
    }
    let (lo, hi) = eps.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    if !(lo > 0.0) || (hi / lo).log10() < 3.0 - 1e-9 {
        return Err(MeasureError::Domain("ε values must be positive and span at least 3 decades".into()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = eps.iter().zip(measures).filter(|(_, m)| **m > 0.0).map(|(e, m)| (e.ln(), m.ln())).unzip();
    linear_fit(&xs, &ys).map(|(s, _)| s).ok_or(MeasureError::DegenerateFit)
}

/// True when the fitted exponent reaches 1/(2M) − 0.05.
pub fn decay_passes(slope: f64, m: usize) -> bool {
    slope >= 1.0 / (2.0 * m as f64) - 0.05
}

#[derive(Debug, Clone, Serialize)]
pub struct SublevelReport {
    pub eps_list: Vec<f64>,
    /// sup over the family of meas{|f| ≤ ε}, per ε.
    pub measures: Vec<f64>,
    pub fitted_exponent: Option<f64>,
    #[serde(rename = "M")]
    pub m: usize,
    /// Largest zero count over the family.
    #[serde(rename = "K")]
    pub k: usize,
    pub pass: bool,
}

/// Sublevel measures of a sampled family.
pub fn sublevel_report<F: SublevelFn>(family: &[F], horizon: f64, eps_list: &[f64], m: usize, base: usize) -> SublevelReport {
    let measures: Vec<f64> = eps_list
        .iter()
        .map(|&e| family.par_iter().map(|f| sublevel_measure(|t| f.value(t), horizon, e, base)).reduce(|| 0.0, f64::max))
        .collect();
    let k = family.par_iter().map(|f| count_zeros(f, horizon, base)).max().unwrap_or(0);
    let fitted_exponent = fit_decay_exponent(eps_list, &measures).ok();
    SublevelReport { eps_list: eps_list.to_vec(), measures, fitted_exponent, m, k, pass: fitted_exponent.is_some_and(|s| decay_passes(s, m)) }
}

/// Fitted exponent of the largest Σ^p component length over the family, per p = 1..=M.
pub fn component_length_exponents<F: SublevelFn>(
    family: &[F],
    horizon: f64,
    eps_list: &[f64],
    m: usize,
    c: f64,
    base: usize,
) -> Result<Vec<Option<f64>>, MeasureError> {
    let mut lengths = vec![vec![0.0f64; eps_list.len()]; m];
    for (e_idx, &eps) in eps_list.iter().enumerate() {
        let decomps = family.par_iter().map(|f| sigma_decomposition(f, horizon, eps, m, c, base)).collect::<Result<Vec<_>, _>>()?;
        for d in decomps {
            for p in 0..m {
                lengths[p][e_idx] = lengths[p][e_idx].max(d.max_lengths[p]);
            }
        }
    }
    Ok(lengths.iter().map(|l| fit_decay_exponent(eps_list, l).ok()).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct XiReport {
    pub j: Vec<usize>,
    pub l: usize,
    pub eps_list: Vec<f64>,
    pub fractions: Vec<f64>,
    pub exponent: Option<f64>,
    /// l/(2M).
    pub target: f64,
    pub samples: usize,
    #[serde(rename = "C")]
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XiParams {
    pub horizon: f64,
    pub samples: usize,
    pub c: f64,
    pub seed: u64,
    #[serde(rename = "M")]
    pub m: usize,
}

/// Uniform point of [0, 2π)ⁿ × S^{n−1}.
pub fn random_cosphere_point(n: usize, rng: &mut impl Rng) -> PhasePoint {
    let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * TAU).collect();
    let xi: Vec<f64> = if n == 1 {
        vec![if rng.gen::<bool>() { 1.0 } else { -1.0 }]
    } else {
        loop {
            let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if r > 1e-12 {
                break v.iter().map(|a| a / r).collect();
            }
        }
    };
    PhasePoint::new(&x, &xi).expect("finite, non-zero covector")
}

const CHUNK: usize = 4096;

/// Fraction of (t̄, y, ω) ∈ [0, T]^l × Tⁿ × S^{n−1} with |T_k⁰| ≤ Cε for all k.
pub fn xi_measure(roots: &[SymbolExpr], j: &[usize], eps_list: &[f64], p: &XiParams, flow: &FlowParams) -> Result<XiReport, MeasureError> {
    let l = j.len().saturating_sub(1);
    if l == 0 {
        return Err(MeasureError::Domain("the sequence needs at least two indices".into()));
    }
    let n = roots.first().map_or(1, |r| r.dim());
    let chunks = p.samples.div_ceil(CHUNK);
    let maxima: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(p.samples - c * CHUNK);
            (0..count)
                .map(|_| {
                    let times: Vec<f64> = (0..l).map(|_| rng.gen::<f64>() * p.horizon).collect();
                    let q = random_cosphere_point(n, &mut rng);
                    Ok(egorov_all(roots, j, &times, &q, flow)?.iter().fold(0.0f64, |a, v| a.max(v.abs())))
                })
                .collect::<Result<Vec<f64>, MeasureError>>()
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    let fractions: Vec<f64> =
        eps_list.iter().map(|&e| maxima.iter().filter(|&&v| v <= p.c * e).count() as f64 / p.samples.max(1) as f64).collect();
    Ok(XiReport {
        j: j.to_vec(),
        l,
        eps_list: eps_list.to_vec(),
        exponent: fit_decay_exponent(eps_list, &fractions).ok(),
        fractions,
        target: l as f64 / (2.0 * p.m as f64),
        samples: p.samples,
        c: p.c,
    })
}

/// (pT + rS)/(T + S).
pub fn interpolation_exponent(p: Ratio<i64>, r: Ratio<i64>, s: Ratio<i64>, t: Ratio<i64>) -> Result<Ratio<i64>, MeasureError> {
    let zero = Ratio::from_integer(0);
    if p >= r {
        return Err(MeasureError::Domain(format!("need p < r, got p = {p}, r = {r}")));
    }
    if s <= zero || t <= zero {
        return Err(MeasureError::Domain(format!("need S, T > 0, got S = {s}, T = {t}")));
    }
    Ok((p * t + r * s) / (t + s))
}
