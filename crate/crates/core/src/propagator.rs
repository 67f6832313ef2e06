//! Block half-wave propagators and the Picard series.
//!
//! With P = Ã + B, Ã = diag(ã_j) and B the coupling, the substitution
//! U(t) = e^{−iÃt}V(t) turns iU′ = PU into V′ = Z(t)V with
//! Z(t) = −i e^{iÃt} B(t) e^{−iÃt}. The Picard levels are
//! V_0 = u₀ and V_k(τ) = ∫₀^τ Z(s)V_{k−1}(s) ds, and Q_l u₀ = V_l(t).
//!
//! The recursion is carried out in the interaction frame
//! W_k(τ) = e^{−iÃτ}V_k(τ), where
//! W_k(τ) = ∫₀^τ e^{−iÃ(τ−s)}(−iB(s))W_{k−1}(s) ds. This is the same
//! cumulative integral multiplied through by e^{−iÃτ}, so every node only
//! needs the one-step propagator e^{±iÃh}. Quadrature is cumulative Simpson
//! with a third-order rule at odd nodes.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::characteristics::{ComplexSymbol, MatrixSymbol, RootSystem};
use crate::fit::linear_fit;
use crate::grid::{Grid, QuantizedMatrix, QuantizedOp, SpectralField, VectorField};
use crate::symdsl::{EvalError, SymbolExpr};

/// Spectral coefficients of each component.
pub type Coeffs = Vec<Vec<C64>>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PropagatorError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("energy drift {drift:e} exceeds tolerance")]
    Stability { drift: f64 },
    #[error("reference solve did not converge: successive halvings differ by {diff:e}")]
    Convergence { diff: f64 },
    #[error("band 2^{band} does not fit below the Nyquist frequency {nyquist}")]
    Band { band: u32, nyquist: usize },
    #[error("{0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagatorParams {
    /// RK4 step is cfl·Δx/(max speed), i.e. cfl·π over the largest frequency of the block.
    pub cfl: f64,
    /// Relative L² drift allowed in a unitary half-wave.
    pub energy_tol: f64,
    /// Successive-halving tolerance of the reference solver.
    pub ref_tol: f64,
    pub max_halvings: u32,
    pub power_steps: usize,
    pub power_times: usize,
}

impl Default for PropagatorParams {
    fn default() -> Self {
        PropagatorParams { cfl: 0.0125, energy_tol: 1e-6, ref_tol: 1e-9, max_halvings: 12, power_steps: 20, power_times: 5 }
    }
}

/// P = diag(roots) + B on a periodic grid.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub roots: RootSystem,
    pub b: MatrixSymbol,
    pub grid: Grid,
    pub horizon: f64,
}

impl SystemSpec {
    pub fn new(roots: RootSystem, b: MatrixSymbol, grid: Grid, horizon: f64) -> Result<Self, PropagatorError> {
        if b.size() != roots.roots.len() {
            return Err(PropagatorError::Shape(format!("B is {0}×{0} but there are {1} roots", b.size(), roots.roots.len())));
        }
        if roots.roots.iter().any(|r| r.depends_on_t()) {
            return Err(PropagatorError::Shape("roots must not depend on t".into()));
        }
        Ok(SystemSpec { roots, b, grid, horizon })
    }

    /// Uncoupled system.
    pub fn free(roots: RootSystem, grid: Grid, horizon: f64) -> Self {
        let m = roots.roots.len();
        let b = MatrixSymbol::zeros(m, grid.dim(), 0);
        SystemSpec { roots, b, grid, horizon }
    }

    pub fn size(&self) -> usize {
        self.roots.roots.len()
    }
}

/// The scalar generator of one component.
#[derive(Debug, Clone)]
struct Generator {
    op: QuantizedOp,
    mult: Option<Vec<C64>>,
    omega: f64,
    hermitian: bool,
}

impl Generator {
    fn new(sym: &ComplexSymbol, grid: &Grid) -> Result<Self, EvalError> {
        let raw = QuantizedOp::new(sym, grid, 0.0)?;
        if let Some(m) = raw.multiplier() {
            let mult = m.to_vec();
            let omega = mult.iter().fold(0.0f64, |a, c| a.max(c.norm()));
            let hermitian = mult.iter().all(|c| c.im == 0.0);
            return Ok(Generator { op: raw, mult: Some(mult), omega, hermitian });
        }
        let hermitian = sym.im.is_none();
        let op = if hermitian { raw.hermitian_part() } else { raw };
        let omega = op.norm_bound();
        Ok(Generator { op, mult: None, omega, hermitian })
    }

    fn apply(&self, u: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        match &self.mult {
            Some(m) => out.iter_mut().zip(m).zip(u).for_each(|((o, a), v)| *o = a * v),
            None => self.op.apply_add(u, C64::new(1.0, 0.0), out),
        }
    }

    /// w(t) for i w′ = Op(ã)w, w(0) = u.
    fn evolve(&self, t: f64, u: &[C64], params: &PropagatorParams) -> Result<Vec<C64>, PropagatorError> {
        if t == 0.0 {
            return Ok(u.to_vec());
        }
        if let Some(m) = &self.mult {
            return Ok(u.iter().zip(m).map(|(v, a)| v * (C64::new(0.0, -t) * a).exp()).collect());
        }
        let steps = ((t.abs() * self.omega) / (params.cfl * std::f64::consts::PI)).ceil().max(1.0) as usize;
        let dt = t / steps as f64;
        let len = u.len();
        let mut w = u.to_vec();
        let (mut k, mut acc, mut stage) = (vec![C64::default(); len], vec![C64::default(); len], vec![C64::default(); len]);
        let minus_i = C64::new(0.0, -1.0);
        for _ in 0..steps {
            acc.copy_from_slice(&w);
            for (s, (coef, weight)) in [(0.0, 1.0), (0.5, 2.0), (0.5, 2.0), (1.0, 1.0)].into_iter().enumerate() {
                if s == 0 {
                    stage.copy_from_slice(&w);
                } else {
                    stage.iter_mut().zip(&w).zip(&k).for_each(|((st, wv), kv)| *st = wv + kv * (dt * coef));
                }
                self.apply(&stage, &mut k);
                k.iter_mut().for_each(|v| *v *= minus_i);
                acc.iter_mut().zip(&k).for_each(|(a, kv)| *a += kv * (dt * weight / 6.0));
            }
            w.copy_from_slice(&acc);
        }
        if self.hermitian {
            let n0 = norm(u);
            let drift = (norm(&w) - n0).abs() / n0.max(f64::MIN_POSITIVE);
            if n0 > 0.0 && drift > params.energy_tol {
                return Err(PropagatorError::Stability { drift });
            }
        }
        Ok(w)
    }
}

fn norm(u: &[C64]) -> f64 {
    u.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// L² norm of a coefficient vector on the grid: (2π)^{n/2}·ℓ².
fn l2(grid: &Grid, u: &Coeffs) -> f64 {
    grid.torus_volume().sqrt() * u.iter().map(|c| norm(c).powi(2)).sum::<f64>().sqrt()
}

fn axpy(y: &mut Coeffs, a: C64, x: &Coeffs) {
    for (yc, xc) in y.iter_mut().zip(x) {
        yc.iter_mut().zip(xc).for_each(|(p, q)| *p += a * q);
    }
}

fn zeros_like(u: &Coeffs) -> Coeffs {
    u.iter().map(|c| vec![C64::default(); c.len()]).collect()
}

/// Half-wave evolution e^{−i Op(ã) t}u of one scalar block.
pub fn half_wave(block: &SymbolExpr, t: f64, u: &SpectralField, params: &PropagatorParams) -> Result<SpectralField, PropagatorError> {
    let g = Generator::new(&ComplexSymbol::real(block.clone()), u.grid())?;
    let w = g.evolve(t, u.spec(), params)?;
    Ok(SpectralField::from_spectral(u.grid(), w).expect("grid length preserved"))
}

enum Coupling {
    Zero,
    Fixed(Arc<QuantizedMatrix>),
    Timed { sym: MatrixSymbol, cache: Mutex<HashMap<u64, Arc<QuantizedMatrix>>> },
}

impl Coupling {
    fn at(&self, grid: &Grid, t: f64) -> Result<Option<Arc<QuantizedMatrix>>, EvalError> {
        match self {
            Coupling::Zero => Ok(None),
            Coupling::Fixed(q) => Ok(Some(q.clone())),
            Coupling::Timed { sym, cache } => {
                if let Some(q) = cache.lock().expect("coupling cache poisoned").get(&t.to_bits()) {
                    return Ok(Some(q.clone()));
                }
                let q = Arc::new(QuantizedMatrix::new(sym, grid, t)?);
                cache.lock().expect("coupling cache poisoned").insert(t.to_bits(), q.clone());
                Ok(Some(q))
            }
        }
    }
}

/// Nodes and levels of the Picard recursion.
#[derive(Debug, Clone)]
pub struct PicardState {
    pub t: f64,
    pub nodes: Vec<f64>,
    /// `w[k][i]` = e^{−iÃτ_i}V_k(τ_i).
    pub w: Vec<Vec<Coeffs>>,
    /// `levels[k]` = V_k(t) = Q_k u₀.
    pub levels: Vec<Coeffs>,
    grid: Grid,
}

impl PicardState {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// Q_l u₀ as a field.
    pub fn q_l(&self, l: usize) -> VectorField {
        VectorField::from_spectral(&self.grid, self.levels[l].clone()).expect("grid length preserved")
    }

    /// ‖V_k(t)‖_{L²} for k = 0..=N.
    pub fn level_norms(&self) -> Vec<f64> {
        self.levels.iter().map(|v| l2(&self.grid, v)).collect()
    }

    /// S_N(t) = Σ_k V_k(t).
    pub fn partial_sum(&self) -> Coeffs {
        let mut s = zeros_like(&self.levels[0]);
        for v in &self.levels {
            axpy(&mut s, C64::new(1.0, 0.0), v);
        }
        s
    }

    /// e^{−iÃt}S_N(t) = Σ_k W_k(t).
    pub fn solution(&self) -> VectorField {
        let last = self.nodes.len() - 1;
        let mut s = zeros_like(&self.levels[0]);
        for wk in &self.w {
            axpy(&mut s, C64::new(1.0, 0.0), &wk[last]);
        }
        VectorField::from_spectral(&self.grid, s).expect("grid length preserved")
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub u: VectorField,
    pub level_norms: Vec<f64>,
    /// ‖u − u_ref‖_{L²}, when a reference was supplied.
    pub residual: Option<f64>,
    /// (t·Z̄)^{N+1}/(N+1)!·‖u₀‖.
    pub tail_bound: f64,
    pub z_bar: f64,
    pub t: f64,
    pub n: usize,
    pub nodes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub t: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub nodes: usize,
    pub level_norms: Vec<f64>,
    pub residual: Option<f64>,
    pub tail_bound: f64,
    pub z_bar: f64,
    pub u_norm: f64,
}

impl SolveReport {
    pub fn with_reference(mut self, reference: &VectorField) -> Self {
        self.residual = Some(self.u.sub(reference).expect("same grid and size").l2_norm());
        self
    }

    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            t: self.t,
            n: self.n,
            nodes: self.nodes,
            level_norms: self.level_norms.clone(),
            residual: self.residual,
            tail_bound: self.tail_bound,
            z_bar: self.z_bar,
            u_norm: self.u.l2_norm(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    pub t: f64,
    pub nodes: usize,
    pub probes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmoothingRow {
    pub band: u32,
    pub rho: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmoothingTable {
    pub level: usize,
    pub rows: Vec<SmoothingRow>,
    /// −slope of log₂ρ against the band index; +∞ when every ρ vanishes.
    pub n_emp: f64,
}

/// Random unit-L² field with coefficients supported in 2^band ≤ |k| < 2^{band+1}.
pub fn band_field(grid: &Grid, m: usize, band: u32, rng: &mut impl Rng) -> Result<VectorField, PropagatorError> {
    let (lo, hi) = (2f64.powi(band as i32), 2f64.powi(band as i32 + 1));
    if hi > grid.nyquist() as f64 {
        return Err(PropagatorError::Band { band, nyquist: grid.nyquist() });
    }
    let spec: Coeffs = (0..m)
        .map(|_| {
            (0..grid.len())
                .map(|i| {
                    let k = grid.mode(i).iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
                    if (lo..hi).contains(&k) {
                        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
                    } else {
                        C64::default()
                    }
                })
                .collect()
        })
        .collect();
    let scale = 1.0 / l2(grid, &spec);
    Ok(VectorField::from_spectral(grid, spec.into_iter().map(|c| c.into_iter().map(|v| v * scale).collect()).collect())
        .expect("grid length preserved"))
}

pub struct Propagator {
    spec: SystemSpec,
    params: PropagatorParams,
    gens: Vec<Generator>,
    coupling: Coupling,
}

impl Propagator {
    /// Builds the block generators. Real, t-independent diagonal entries of B
    /// are absorbed into Ã; everything else stays in the coupling.
    pub fn new(spec: SystemSpec, params: PropagatorParams) -> Result<Self, PropagatorError> {
        let m = spec.size();
        let mut off = spec.b.clone();
        let mut gens = Vec::with_capacity(m);
        for j in 0..m {
            let bjj = spec.b.entry(j, j);
            let mut gen = ComplexSymbol::real(spec.roots.roots[j].clone());
            if !bjj.is_zero() && bjj.im.is_none() && !bjj.depends_on_t() {
                gen.re = gen.re.add(&bjj.re);
                off.set(j, j, ComplexSymbol::real(SymbolExpr::constant(0.0, spec.grid.dim())));
            }
            gens.push(Generator::new(&gen, &spec.grid)?);
        }
        let coupling = if off.is_zero() {
            Coupling::Zero
        } else if off.depends_on_t() {
            Coupling::Timed { sym: off, cache: Mutex::new(HashMap::new()) }
        } else {
            Coupling::Fixed(Arc::new(QuantizedMatrix::new(&off, &spec.grid, 0.0)?))
        };
        Ok(Propagator { spec, params, gens, coupling })
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.spec.grid
    }

    pub fn size(&self) -> usize {
        self.gens.len()
    }

    pub fn params(&self) -> &PropagatorParams {
        &self.params
    }

    fn check(&self, u: &VectorField) -> Result<(), PropagatorError> {
        if u.len() != self.size() || u.grid() != self.grid() {
            return Err(PropagatorError::Shape(format!("field has {} components, system has {}", u.len(), self.size())));
        }
        Ok(())
    }

    /// e^{−iÃt} on coefficients, block by block.
    pub fn half_wave_coeffs(&self, t: f64, u: &Coeffs) -> Result<Coeffs, PropagatorError> {
        self.gens.par_iter().zip(u).map(|(g, c)| g.evolve(t, c, &self.params)).collect()
    }

    pub fn half_wave(&self, t: f64, u: &VectorField) -> Result<VectorField, PropagatorError> {
        self.check(u)?;
        let w = self.half_wave_coeffs(t, &u.spectra())?;
        Ok(VectorField::from_spectral(self.grid(), w).expect("grid length preserved"))
    }

    fn coupling_at(&self, t: f64) -> Result<Option<Arc<QuantizedMatrix>>, PropagatorError> {
        Ok(self.coupling.at(self.grid(), t)?)
    }

    /// Op(B(t))u for the coupling part of B.
    pub fn apply_coupling(&self, t: f64, u: &Coeffs) -> Result<Coeffs, PropagatorError> {
        Ok(match self.coupling_at(t)? {
            Some(b) => b.apply_spec(u),
            None => zeros_like(u),
        })
    }

    /// Z(t)u = −i e^{iÃt} B(t) e^{−iÃt} u.
    pub fn apply_z(&self, t: f64, u: &VectorField) -> Result<VectorField, PropagatorError> {
        self.check(u)?;
        let z = self.apply_z_coeffs(t, &u.spectra())?;
        Ok(VectorField::from_spectral(self.grid(), z).expect("grid length preserved"))
    }

    fn apply_z_coeffs(&self, t: f64, u: &Coeffs) -> Result<Coeffs, PropagatorError> {
        let Some(b) = self.coupling_at(t)? else { return Ok(zeros_like(u)) };
        let mut inner = b.apply_spec(&self.half_wave_coeffs(t, u)?);
        inner.iter_mut().flatten().for_each(|v| *v *= C64::new(0.0, -1.0));
        self.half_wave_coeffs(-t, &inner)
    }

    /// Z̄ = max over sampled times of a power-iteration estimate of ‖Z(τ)‖_{L²→L²}.
    ///
    /// The half-wave factors of Z(τ) are unitary, so ‖Z(τ)‖ = ‖Op(B(τ))‖ and
    /// the iteration runs on the coupling alone; one sample suffices when B is
    /// t-independent.
    pub fn z_bar(&self, t: f64) -> Result<f64, PropagatorError> {
        if matches!(self.coupling, Coupling::Zero) {
            return Ok(0.0);
        }
        let g = self.grid();
        let times = if matches!(self.coupling, Coupling::Fixed(_)) { 1 } else { self.params.power_times.max(1) };
        let mut best: f64 = 0.0;
        for s in 0..times {
            let tau = if times == 1 { 0.0 } else { t * s as f64 / (times - 1) as f64 };
            let Some(b) = self.coupling_at(tau)? else { continue };
            let adjoint = b.adjoint();
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed + s as u64);
            let mut v: Coeffs = (0..self.size())
                .map(|_| (0..g.len()).map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect())
                .collect();
            let mut est = 0.0;
            for _ in 0..self.params.power_steps {
                let nv = l2(g, &v);
                if nv == 0.0 {
                    break;
                }
                v.iter_mut().flatten().for_each(|c| *c /= nv);
                let w = b.apply_spec(&v);
                est = l2(g, &w);
                v = adjoint.apply_spec(&w);
            }
            best = best.max(est);
        }
        Ok(best)
    }

    /// Levels V_0..V_N of the Picard series on Q + 1 equispaced nodes in [0, t].
    pub fn picard_levels(&self, u0: &VectorField, t: f64, n: usize, q: usize) -> Result<PicardState, PropagatorError> {
        self.check(u0)?;
        if q < 8 {
            return Err(PropagatorError::Shape(format!("at least 8 node intervals are required, got {q}")));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(PropagatorError::Shape(format!("time must be finite and non-negative, got {t}")));
        }
        let h = t / q as f64;
        let nodes: Vec<f64> = (0..=q).map(|i| i as f64 * h).collect();
        let step = |u: &Coeffs, dt: f64| self.half_wave_coeffs(dt, u);

        let mut w0 = Vec::with_capacity(q + 1);
        w0.push(u0.spectra());
        for i in 0..q {
            let next = step(&w0[i], h)?;
            w0.push(next);
        }
        let mut w = vec![w0];
        let (hc, zero) = (|c: f64| C64::new(c * h, 0.0), zeros_like(&w[0][0]));
        for _ in 1..=n {
            let prev = w.last().expect("level 0 exists");
            if matches!(self.coupling, Coupling::Zero) {
                w.push(vec![zero.clone(); q + 1]);
                continue;
            }
            let f: Vec<Coeffs> = nodes
                .par_iter()
                .zip(prev)
                .map(|(&tau, wk)| {
                    let mut b = self.apply_coupling(tau, wk)?;
                    b.iter_mut().flatten().for_each(|v| *v *= C64::new(0.0, -1.0));
                    Ok(b)
                })
                .collect::<Result<_, PropagatorError>>()?;
            let mut cur = vec![zero.clone(); q + 1];
            let mut i = 0;
            while i < q {
                if i + 2 <= q {
                    let mut a = cur[i].clone();
                    axpy(&mut a, hc(5.0 / 12.0), &f[i]);
                    let mut odd = step(&a, h)?;
                    axpy(&mut odd, hc(8.0 / 12.0), &f[i + 1]);
                    axpy(&mut odd, hc(-1.0 / 12.0), &step(&f[i + 2], -h)?);

                    let mut b = cur[i].clone();
                    axpy(&mut b, hc(1.0 / 3.0), &f[i]);
                    let mut even = step(&b, h)?;
                    axpy(&mut even, hc(4.0 / 3.0), &f[i + 1]);
                    let mut even = step(&even, h)?;
                    axpy(&mut even, hc(1.0 / 3.0), &f[i + 2]);
                    cur[i + 1] = odd;
                    cur[i + 2] = even;
                    i += 2;
                } else {
                    let mut a = cur[i].clone();
                    axpy(&mut a, hc(8.0 / 12.0), &f[i]);
                    axpy(&mut a, hc(-1.0 / 12.0), &step(&f[i - 1], h)?);
                    let mut last = step(&a, h)?;
                    axpy(&mut last, hc(5.0 / 12.0), &f[i + 1]);
                    cur[i + 1] = last;
                    i += 1;
                }
            }
            w.push(cur);
        }
        let levels = w.par_iter().map(|wk| self.half_wave_coeffs(-t, &wk[q])).collect::<Result<Vec<_>, _>>()?;
        Ok(PicardState { t, nodes, w, levels, grid: self.grid().clone() })
    }

    /// u(t) = e^{−iÃt}S_N(t)u₀ with the factorial tail bound.
    pub fn picard_solve(&self, u0: &VectorField, t: f64, n: usize, q: usize) -> Result<SolveReport, PropagatorError> {
        let state = self.picard_levels(u0, t, n, q)?;
        let z_bar = self.z_bar(t)?;
        let tail_bound = factorial_envelope(t * z_bar, n + 1) * u0.l2_norm();
        Ok(SolveReport {
            u: state.solution(),
            level_norms: state.level_norms(),
            residual: None,
            tail_bound,
            z_bar,
            t,
            n,
            nodes: q,
        })
    }

    fn rhs(&self, t: f64, u: &Coeffs) -> Result<Coeffs, PropagatorError> {
        let mut out: Coeffs = self
            .gens
            .iter()
            .zip(u)
            .map(|(g, c)| {
                let mut o = vec![C64::default(); c.len()];
                g.apply(c, &mut o);
                o
            })
            .collect();
        if let Some(b) = self.coupling_at(t)? {
            b.apply_add(u, C64::new(1.0, 0.0), &mut out);
        }
        out.iter_mut().flatten().for_each(|v| *v *= C64::new(0.0, -1.0));
        Ok(out)
    }

    fn rk4(&self, u0: &Coeffs, t: f64, steps: usize) -> Result<Coeffs, PropagatorError> {
        let dt = t / steps as f64;
        let mut u = u0.clone();
        for s in 0..steps {
            let t0 = s as f64 * dt;
            let k1 = self.rhs(t0, &u)?;
            let mut y = u.clone();
            axpy(&mut y, C64::new(dt / 2.0, 0.0), &k1);
            let k2 = self.rhs(t0 + dt / 2.0, &y)?;
            let mut y = u.clone();
            axpy(&mut y, C64::new(dt / 2.0, 0.0), &k2);
            let k3 = self.rhs(t0 + dt / 2.0, &y)?;
            let mut y = u.clone();
            axpy(&mut y, C64::new(dt, 0.0), &k3);
            let k4 = self.rhs(t0 + dt, &y)?;
            for (k, w) in [(k1, 1.0), (k2, 2.0), (k3, 2.0), (k4, 1.0)] {
                axpy(&mut u, C64::new(dt * w / 6.0, 0.0), &k);
            }
            if u.iter().flatten().any(|v| !v.is_finite()) {
                return Err(PropagatorError::Stability { drift: f64::INFINITY });
            }
        }
        Ok(u)
    }

    /// Direct RK4 solve of iu′ = Op(Ã + B)u, halving the step until two
    /// successive results differ by at most `ref_tol`·max(1, ‖u₀‖).
    pub fn reference_solve(&self, u0: &VectorField, t: f64) -> Result<VectorField, PropagatorError> {
        self.check(u0)?;
        let c0 = u0.spectra();
        if t == 0.0 {
            return Ok(u0.clone());
        }
        let b_bound = match self.coupling_at(0.0)? {
            Some(b) => (0..b.size())
                .map(|i| (0..b.size()).filter_map(|j| b.entry(i, j)).map(|op| op.norm_bound()).sum::<f64>())
                .fold(0.0, f64::max),
            None => 0.0,
        };
        let omega = self.gens.iter().map(|g| g.omega).fold(0.0, f64::max) + b_bound;
        let mut steps = ((t.abs() * omega) / 0.5).ceil().max(1.0) as usize;
        let tol = self.params.ref_tol * u0.l2_norm().max(1.0);
        let mut prev = self.rk4(&c0, t, steps)?;
        let mut diff = f64::INFINITY;
        for _ in 0..self.params.max_halvings {
            steps *= 2;
            let next = self.rk4(&c0, t, steps)?;
            let mut d = next.clone();
            axpy(&mut d, C64::new(-1.0, 0.0), &prev);
            diff = l2(self.grid(), &d);
            prev = next;
            if diff <= tol {
                return Ok(VectorField::from_spectral(self.grid(), prev).expect("grid length preserved"));
            }
        }
        Err(PropagatorError::Convergence { diff })
    }

    /// ρ_band = max over random unit fields in the band of ‖Q_l u‖_{L²}, for each requested level.
    pub fn smoothing_probe(&self, levels: &[usize], bands: &[u32], p: &ProbeParams) -> Result<Vec<SmoothingTable>, PropagatorError> {
        let top = levels.iter().copied().max().unwrap_or(0);
        let jobs: Vec<(u32, usize)> = bands.iter().flat_map(|&b| (0..p.probes).map(move |r| (b, r))).collect();
        for &b in bands {
            let hi = 2usize.pow(b + 1);
            if hi > self.grid().nyquist() {
                return Err(PropagatorError::Band { band: b, nyquist: self.grid().nyquist() });
            }
        }
        let norms: Vec<(u32, Vec<f64>)> = jobs
            .par_iter()
            .map(|&(band, r)| {
                let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
                rng.set_stream(((band as u64) << 32) | r as u64);
                let u = band_field(self.grid(), self.size(), band, &mut rng)?;
                Ok((band, self.picard_levels(&u, p.t, top, p.nodes)?.level_norms()))
            })
            .collect::<Result<_, PropagatorError>>()?;
        Ok(levels
            .iter()
            .map(|&l| {
                let rows: Vec<SmoothingRow> = bands
                    .iter()
                    .map(|&band| SmoothingRow {
                        band,
                        rho: norms.iter().filter(|(b, _)| *b == band).map(|(_, v)| v[l]).fold(0.0, f64::max),
                    })
                    .collect();
                let n_emp = empirical_order(&rows);
                SmoothingTable { level: l, rows, n_emp }
            })
            .collect())
    }
}

/// −slope of log₂ρ against the band index over the non-zero rows; +∞ when all vanish.
pub fn empirical_order(rows: &[SmoothingRow]) -> f64 {
    let (ks, ys): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.rho > 0.0).map(|r| (r.band as f64, r.rho.log2())).unzip();
    if ks.is_empty() {
        return f64::INFINITY;
    }
    linear_fit(&ks, &ys).map_or(f64::INFINITY, |(s, _)| -s)
}

/// x^k/k!
pub fn factorial_envelope(x: f64, k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, j| acc * x / j as f64)
}
