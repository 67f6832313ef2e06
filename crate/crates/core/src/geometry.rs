//! Bicharacteristic flows, broken flows and their endpoint sets.
//!
//! Flows integrate ẋ = ∂_ξa, ξ̇ = −∂_xa with classical RK4. Positions are
//! not reduced mod 2π during integration, so trajectories stay continuous.

use std::f64::consts::{PI, TAU};
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::characteristics::RootSystem;
use crate::symdsl::{EvalError, EvalMode, PhasePoint, SymbolExpr, MAX_DIM};

/// Bounds on |ξ| outside of which a flow is considered to have blown up.
pub const XI_MIN: f64 = 1e-3;
pub const XI_MAX: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("|ξ| = {xi_norm:e} left [1e-3, 1e6] at t = {t}")]
    Blowup { t: f64, xi_norm: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Sequence(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowParams {
    /// RK4 step; `None` picks 1e−3·2π over the cosphere speed at the start point.
    pub dt: Option<f64>,
    /// A switch is admissible where |a_j − a_k| ≤ event_tol·|ξ|.
    pub event_tol: f64,
    /// Bisection tolerance on switch times.
    pub time_tol: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams { dt: None, event_tol: 1e-8, time_tol: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct State {
    n: usize,
    z: [f64; 2 * MAX_DIM],
}

impl State {
    fn of(p: &PhasePoint) -> Self {
        let n = p.dim();
        let mut z = [0.0; 2 * MAX_DIM];
        z[..n].copy_from_slice(p.x());
        z[n..2 * n].copy_from_slice(p.xi());
        State { n, z }
    }

    fn x(&self) -> &[f64] {
        &self.z[..self.n]
    }

    fn xi(&self) -> &[f64] {
        &self.z[self.n..2 * self.n]
    }

    fn xi_norm(&self) -> f64 {
        self.xi().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn point(&self) -> PhasePoint {
        PhasePoint::raw(self.n, self.x(), self.xi())
    }

    fn axpy(&self, h: f64, d: &[f64; 2 * MAX_DIM]) -> State {
        let mut s = *self;
        for i in 0..2 * self.n {
            s.z[i] += h * d[i];
        }
        s
    }

    fn eval(&self, a: &SymbolExpr) -> Result<f64, EvalError> {
        a.eval_at(self.x(), self.xi(), 0.0, EvalMode::Exact)
    }

    fn check(&self, t: f64) -> Result<(), GeometryError> {
        let xi_norm = self.xi_norm();
        if !(XI_MIN..=XI_MAX).contains(&xi_norm) || self.z.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::Blowup { t, xi_norm });
        }
        Ok(())
    }
}

fn field(a: &SymbolExpr, s: &State) -> Result<[f64; 2 * MAX_DIM], EvalError> {
    let j = a.jet_at(s.x(), s.xi(), 0.0, EvalMode::Exact)?;
    let mut d = [0.0; 2 * MAX_DIM];
    for k in 0..s.n {
        d[k] = j.dxi[k];
        d[s.n + k] = -j.dx[k];
    }
    Ok(d)
}

fn rk4(a: &SymbolExpr, s: &State, h: f64) -> Result<State, EvalError> {
    let k1 = field(a, s)?;
    let k2 = field(a, &s.axpy(h / 2.0, &k1))?;
    let k3 = field(a, &s.axpy(h / 2.0, &k2))?;
    let k4 = field(a, &s.axpy(h, &k3))?;
    let mut out = *s;
    for i in 0..2 * s.n {
        out.z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

/// d/dt g along the flow of f: {f, g}.
fn bracket_at(f: &SymbolExpr, g: &SymbolExpr, s: &State) -> Result<f64, EvalError> {
    let jf = f.jet_at(s.x(), s.xi(), 0.0, EvalMode::Exact)?;
    let jg = g.jet_at(s.x(), s.xi(), 0.0, EvalMode::Exact)?;
    Ok((0..s.n).map(|k| jf.dxi[k] * jg.dx[k] - jf.dx[k] * jg.dxi[k]).sum())
}

/// Default step: 1e−3·2π over the cosphere speed |∂_ξa| + |∂_xa|/|ξ|.
fn default_dt(a: &SymbolExpr, s: &State) -> Result<f64, EvalError> {
    let j = a.jet_at(s.x(), s.xi(), 0.0, EvalMode::Exact)?;
    let speed = j.dxi.iter().map(|v| v * v).sum::<f64>().sqrt() + j.dx.iter().map(|v| v * v).sum::<f64>().sqrt() / s.xi_norm();
    Ok(1e-3 * TAU / speed.max(1e-3))
}

fn step_size(a: &SymbolExpr, s: &State, params: &FlowParams) -> Result<f64, GeometryError> {
    match params.dt {
        Some(dt) if dt > 0.0 && dt.is_finite() => Ok(dt),
        Some(dt) => Err(GeometryError::Sequence(format!("dt must be positive, got {dt}"))),
        None => Ok(default_dt(a, s)?),
    }
}

/// End point and sampled path of a Hamiltonian flow.
#[derive(Debug, Clone)]
pub struct Flow {
    pub end: PhasePoint,
    /// `(t, point)` at every step, starting with `(0, p₀)`.
    pub path: Vec<(f64, PhasePoint)>,
}

fn integrate(a: &SymbolExpr, s0: State, t: f64, params: &FlowParams, mut visit: impl FnMut(f64, &State)) -> Result<State, GeometryError> {
    s0.check(0.0)?;
    visit(0.0, &s0);
    if t == 0.0 {
        return Ok(s0);
    }
    let dt = step_size(a, &s0, params)?;
    let steps = (t.abs() / dt).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let mut s = s0;
    for i in 1..=steps {
        s = rk4(a, &s, h)?;
        let ti = h * i as f64;
        s.check(ti)?;
        visit(ti, &s);
    }
    Ok(s)
}

/// Φ_a^t(p₀) with its sampled path; negative t runs the flow backwards.
pub fn hamiltonian_flow(a: &SymbolExpr, p0: &PhasePoint, t: f64, params: &FlowParams) -> Result<Flow, GeometryError> {
    let mut path = Vec::new();
    let end = integrate(a, State::of(p0), t, params, |ti, s| path.push((ti, s.point())))?;
    Ok(Flow { end: end.point(), path })
}

/// Φ_a^t(p₀) without recording the path.
pub fn flow_end(a: &SymbolExpr, p0: &PhasePoint, t: f64, params: &FlowParams) -> Result<PhasePoint, GeometryError> {
    Ok(integrate(a, State::of(p0), t, params, |_, _| {})?.point())
}

/// Runs `(root, duration)` segments in order.
pub fn flow_segments(roots: &[SymbolExpr], segments: &[(usize, f64)], p0: &PhasePoint, params: &FlowParams) -> Result<PhasePoint, GeometryError> {
    let mut p = *p0;
    for &(j, dt) in segments {
        let a = roots.get(j).ok_or_else(|| GeometryError::Sequence(format!("root index {j} out of range")))?;
        p = flow_end(a, &p, dt, params)?;
    }
    Ok(p)
}

fn check_sequence(n_roots: usize, j: &[usize]) -> Result<(), GeometryError> {
    if j.is_empty() {
        return Err(GeometryError::Sequence("index sequence is empty".into()));
    }
    if let Some(&bad) = j.iter().find(|&&v| v >= n_roots) {
        return Err(GeometryError::Sequence(format!("root index {bad} out of range")));
    }
    if j.windows(2).any(|w| w[0] == w[1]) {
        return Err(GeometryError::Sequence("consecutive indices must differ".into()));
    }
    Ok(())
}

/// T_k⁰ = (a_{j_k} − a_{j_{k+1}}) at q_k, where q₀ = p and
/// q_i = Φ_{j_i}^{t_i − t_{i−1}}(q_{i−1}) with t₀ = 0.
pub fn egorov_symbol(roots: &[SymbolExpr], j: &[usize], times: &[f64], p: &PhasePoint, params: &FlowParams) -> Result<f64, GeometryError> {
    Ok(*egorov_all(roots, j, times, p, params)?.last().expect("at least one time"))
}

/// T_1⁰, …, T_l⁰ along one composed flow, for |J| = l + 1 and l times.
pub fn egorov_all(roots: &[SymbolExpr], j: &[usize], times: &[f64], p: &PhasePoint, params: &FlowParams) -> Result<Vec<f64>, GeometryError> {
    check_sequence(roots.len(), j)?;
    let l = times.len();
    if j.len() != l + 1 || l == 0 {
        return Err(GeometryError::Sequence(format!("{} indices need {} times, got {l}", j.len(), j.len().saturating_sub(1))));
    }
    let mut s = State::of(p);
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(l);
    for i in 0..l {
        s = integrate(&roots[j[i]], s, times[i] - prev, params, |_, _| {})?;
        prev = times[i];
        out.push(s.eval(&roots[j[i]])? - s.eval(&roots[j[i + 1]])?);
    }
    Ok(out)
}

/// How a switch was detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchKind {
    /// The start point already lies on the multiplicity set.
    Start,
    /// a_{j_k} − a_{j_{k+1}} changes sign.
    Crossing,
    /// |a_{j_k} − a_{j_{k+1}}| has a zero minimum without a sign change.
    Touch,
}

/// One sample of a broken trajectory.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub t: f64,
    pub point: PhasePoint,
    /// Position in J of the active root.
    pub segment: usize,
}

#[derive(Debug, Clone)]
pub struct BrokenTrajectory {
    pub j: Vec<usize>,
    pub switch_times: Vec<f64>,
    pub switch_kinds: Vec<SwitchKind>,
    /// Phase points at the switches.
    pub switch_points: Vec<PhasePoint>,
    pub states: Vec<Sample>,
    /// False when fewer than |J| − 1 switches happened before the horizon.
    pub complete: bool,
    pub horizon: f64,
}

impl BrokenTrajectory {
    pub fn end(&self) -> PhasePoint {
        self.states.last().expect("a trajectory has at least its start point").point
    }

    /// Root index active at the end.
    pub fn active(&self) -> usize {
        self.j[self.switch_times.len()]
    }

    /// `(root, duration)` segments that reproduce the trajectory.
    pub fn segments(&self) -> Vec<(usize, f64)> {
        let mut bounds = vec![0.0];
        bounds.extend(&self.switch_times);
        bounds.push(self.horizon);
        (0..=self.switch_times.len()).map(|i| (self.j[i], bounds[i + 1] - bounds[i])).collect()
    }

    /// Rows `t, x.., ξ.., active` with a header.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        let n = self.states.first().map_or(1, |s| s.point.dim());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("xi{i}")));
        header.push("active".into());
        writeln!(w, "{}", header.join(","))?;
        for s in &self.states {
            let mut row = vec![format!("{:.17e}", s.t)];
            row.extend(s.point.x().iter().map(|v| format!("{v:.17e}")));
            row.extend(s.point.xi().iter().map(|v| format!("{v:.17e}")));
            row.push(self.j[s.segment].to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Bisection for the first sign change of `g` on (0, h]; g(0) and g(h) have opposite signs.
fn bisect(mut lo: f64, mut hi: f64, tol: f64, mut g: impl FnMut(f64) -> Result<f64, GeometryError>) -> Result<f64, GeometryError> {
    let g_lo = g(lo)?;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid)?;
        if gm == 0.0 {
            return Ok(mid);
        }
        if (gm > 0.0) == (g_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Follows a_{j₁} until it meets a_{j₂}, switches, and so on up to time `horizon`.
///
/// A switch fires at the first sign change of a_{j_k} − a_{j_{k+1}} after
/// the previous switch, or at a touch: a local minimum of the modulus that
/// is at most event_tol·|ξ|. A first segment starting on the multiplicity set
/// switches at t = 0.
pub fn broken_flow(roots: &[SymbolExpr], j: &[usize], p0: &PhasePoint, horizon: f64, params: &FlowParams) -> Result<BrokenTrajectory, GeometryError> {
    check_sequence(roots.len(), j)?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(GeometryError::Sequence(format!("horizon must be finite and non-negative, got {horizon}")));
    }
    let mut s = State::of(p0);
    s.check(0.0)?;
    let dt = step_size(&roots[j[0]], &s, params)?;
    let mut traj = BrokenTrajectory {
        j: j.to_vec(),
        switch_times: Vec::new(),
        switch_kinds: Vec::new(),
        switch_points: Vec::new(),
        states: vec![Sample { t: 0.0, point: s.point(), segment: 0 }],
        complete: j.len() == 1,
        horizon,
    };
    let mut t = 0.0;
    let mut seg = 0;
    let mut fresh = false;
    'segments: loop {
        let a = &roots[j[seg]];
        let diff = (seg + 1 < j.len()).then(|| a.sub(&roots[j[seg + 1]]));
        let tol_of = |s: &State| params.event_tol * s.xi_norm();
        if let Some(d) = &diff {
            if seg == 0 && !fresh && s.eval(d)?.abs() <= tol_of(&s) {
                traj.switch_times.push(t);
                traj.switch_kinds.push(SwitchKind::Start);
                traj.switch_points.push(s.point());
                seg += 1;
                fresh = true;
                traj.complete = seg + 1 == j.len();
                continue 'segments;
            }
        }
        // (state, time, d) at the two previous samples of this segment.
        let mut hist: Vec<(State, f64, f64)> = Vec::with_capacity(3);
        let seg_start = t;
        if let Some(d) = &diff {
            hist.push((s, t, s.eval(d)?));
        }
        while t < horizon {
            let h = dt.min(horizon - t);
            let next = rk4(a, &s, h)?;
            next.check(t + h)?;
            if let Some(d) = &diff {
                let dn = next.eval(d)?;
                let (s_prev, t_prev, d_prev) = *hist.last().expect("seeded above");
                let at_start = t_prev == seg_start && seg > 0;
                let mut event: Option<(f64, SwitchKind, State)> = None;
                if !at_start && d_prev != 0.0 && dn != 0.0 && (d_prev > 0.0) != (dn > 0.0) {
                    let tau = bisect(0.0, h, params.time_tol, |u| Ok(rk4(a, &s_prev, u)?.eval(d)?))?;
                    event = Some((t_prev + tau, SwitchKind::Crossing, rk4(a, &s_prev, tau)?));
                } else if hist.len() >= 2 {
                    let (s0, t0, d0) = hist[hist.len() - 2];
                    let interior = !(t0 == seg_start && seg > 0 && d_prev.abs() <= tol_of(&s_prev)) || t0 > seg_start;
                    if interior && d_prev.abs() <= d0.abs() && d_prev.abs() <= dn.abs() && (d0 > 0.0) == (dn > 0.0) {
                        let span = t + h - t0;
                        let slope = |u: f64| -> Result<f64, GeometryError> { Ok(bracket_at(a, d, &rk4(a, &s0, u)?)?) };
                        let (g0, g1) = (slope(0.0)?, slope(span)?);
                        let tau = if g0 == 0.0 {
                            0.0
                        } else if (g0 > 0.0) != (g1 > 0.0) {
                            bisect(0.0, span, params.time_tol, slope)?
                        } else {
                            t_prev - t0
                        };
                        let st = rk4(a, &s0, tau)?;
                        if t0 + tau > seg_start + params.time_tol && st.eval(d)?.abs() <= tol_of(&st) {
                            event = Some((t0 + tau, SwitchKind::Touch, st));
                        }
                    }
                }
                if let Some((te, kind, st)) = event {
                    traj.states.retain(|smp| smp.t <= te || smp.segment < seg);
                    traj.states.push(Sample { t: te, point: st.point(), segment: seg + 1 });
                    traj.switch_times.push(te);
                    traj.switch_kinds.push(kind);
                    traj.switch_points.push(st.point());
                    s = st;
                    t = te;
                    seg += 1;
                    fresh = true;
                    traj.complete = seg + 1 == j.len();
                    continue 'segments;
                }
                if hist.len() == 3 {
                    hist.remove(0);
                }
                hist.push((next, t + h, dn));
            }
            s = next;
            t += h;
            traj.states.push(Sample { t, point: s.point(), segment: seg });
        }
        break;
    }
    Ok(traj)
}

/// Root-group sequences of length 1..=max_len with consecutive entries distinct.
pub fn admissible_sequences(groups: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (0..groups).map(|g| vec![g]).collect();
    let mut frontier = out.clone();
    for _ in 1..max_len {
        frontier = frontier
            .iter()
            .flat_map(|seq| (0..groups).filter(move |&g| g != *seq.last().unwrap()).map(move |g| [seq.as_slice(), &[g]].concat()))
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

/// Endpoint of a complete broken flow, labeled by its root sequence.
#[derive(Debug, Clone)]
pub struct WavefrontPoint {
    pub seed: usize,
    /// Root indices (group representatives).
    pub j: Vec<usize>,
    pub end: PhasePoint,
}

/// Endpoints at time `horizon` of every complete broken flow with at most
/// `max_switches` switches between distinct root groups.
pub fn wavefront_propagate(
    roots: &RootSystem,
    seeds: &[PhasePoint],
    horizon: f64,
    max_switches: usize,
    params: &FlowParams,
) -> Result<Vec<WavefrontPoint>, GeometryError> {
    if max_switches > 4 {
        return Err(GeometryError::Sequence(format!("at most 4 switches are supported, got {max_switches}")));
    }
    let reps: Vec<usize> = roots.groups.iter().map(|g| g[0]).collect();
    let seqs: Vec<Vec<usize>> =
        admissible_sequences(reps.len(), max_switches + 1).into_iter().map(|s| s.into_iter().map(|g| reps[g]).collect()).collect();
    let jobs: Vec<(usize, &Vec<usize>)> = (0..seeds.len()).flat_map(|i| seqs.iter().map(move |s| (i, s))).collect();
    let found: Vec<Option<WavefrontPoint>> = jobs
        .par_iter()
        .map(|&(i, seq)| {
            let tr = broken_flow(&roots.roots, seq, &seeds[i], horizon, params)?;
            Ok(tr.complete.then(|| WavefrontPoint { seed: i, j: seq.clone(), end: tr.end() }))
        })
        .collect::<Result<_, GeometryError>>()?;
    Ok(found.into_iter().flatten().collect())
}

/// Torus distance in x plus relative distance in ξ, in the max norm.
fn return_distance(p: &State, p0: &State) -> f64 {
    let dx = p.x().iter().zip(p0.x()).map(|(a, b)| ((a - b + PI).rem_euclid(TAU) - PI).abs()).fold(0.0, f64::max);
    let dxi = p.xi().iter().zip(p0.xi()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / p0.xi_norm();
    dx.max(dxi)
}

/// Smallest return distance of a flow to its start for t in `window`, with
/// each sampled local minimum refined by golden-section search.
fn closest_return(a: &SymbolExpr, p0: &PhasePoint, window: (f64, f64), params: &FlowParams) -> Result<f64, GeometryError> {
    let s0 = State::of(p0);
    let dt = step_size(a, &s0, params)?;
    let mut samples: Vec<(f64, State, f64)> = Vec::new();
    integrate(a, s0, window.1, &FlowParams { dt: Some(dt), ..*params }, |t, s| samples.push((t, *s, return_distance(s, &s0))))?;
    let mut best = f64::INFINITY;
    for w in samples.windows(3) {
        let (t1, _, d1) = w[1];
        if d1 > w[0].2 || d1 > w[2].2 {
            continue;
        }
        let lo_t = (window.0 - w[0].0).max(0.0);
        let hi_t = (window.1 - w[0].0).min(w[2].0 - w[0].0);
        if lo_t > hi_t || t1 < window.0 - dt {
            continue;
        }
        let dist = |u: f64| -> Result<f64, GeometryError> { Ok(return_distance(&rk4(a, &w[0].1, u)?, &s0)) };
        let (mut lo, mut hi) = (lo_t, hi_t);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        while hi - lo > params.time_tol {
            let (m1, m2) = (hi - g * (hi - lo), lo + g * (hi - lo));
            if dist(m1)? <= dist(m2)? {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        best = best.min(dist(0.5 * (lo + hi))?);
    }
    Ok(best)
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodReport {
    /// Fraction of seeds with some root flow returning within `tol`.
    pub fraction: f64,
    pub seeds: usize,
    pub window: (f64, f64),
    pub tol: f64,
}

/// Fraction of seeds whose flow under some root returns within `tol` for t in `window`.
pub fn detect_periods(roots: &RootSystem, seeds: &[PhasePoint], window: (f64, f64), tol: f64, params: &FlowParams) -> Result<PeriodReport, GeometryError> {
    let reps: Vec<&SymbolExpr> = roots.blocks();
    let hits: Vec<bool> = seeds
        .par_iter()
        .map(|p| {
            for a in &reps {
                if closest_return(a, p, window, params)? <= tol {
                    return Ok(true);
                }
            }
            Ok(false)
        })
        .collect::<Result<_, GeometryError>>()?;
    let fraction = if seeds.is_empty() { 0.0 } else { hits.iter().filter(|&&h| h).count() as f64 / seeds.len() as f64 };
    Ok(PeriodReport { fraction, seeds: seeds.len(), window, tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symdsl::parse;

    fn sym(s: &str) -> SymbolExpr {
        parse(s, 1).unwrap()
    }

    fn pt(x: f64, xi: f64) -> PhasePoint {
        PhasePoint::one_dim(x, xi).unwrap()
    }

    #[test]
    fn straight_rays() {
        let f = hamiltonian_flow(&sym("norm_xi"), &pt(0.0, 3.0), 1.0, &FlowParams::default()).unwrap();
        assert!((f.end.x()[0] - 1.0).abs() < 1e-12 && (f.end.xi()[0] - 3.0).abs() < 1e-12);
        assert_eq!(f.path[0].0, 0.0);
        let e = flow_end(&sym("0.7*xi1"), &pt(1.0, -2.0), 2.5, &FlowParams::default()).unwrap();
        assert!((e.x()[0] - (1.0 + 0.7 * 2.5)).abs() < 1e-12 && (e.xi()[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn energy_conserved() {
        let a = sym("(1+sin(x1)^2)*norm_xi");
        let p0 = pt(0.4, 2.0);
        let e0 = a.eval(&p0).unwrap();
        let f = hamiltonian_flow(&a, &p0, 10.0, &FlowParams::default()).unwrap();
        let drift = f.path.iter().map(|(_, p)| (a.eval(p).unwrap() - e0).abs()).fold(0.0, f64::max);
        assert!(drift <= 1e-8 * e0.abs() * 10.0, "{drift}");
    }

    #[test]
    fn blowup_is_reported() {
        let r = flow_end(&sym("x1*xi1"), &pt(1.0, 1.0), 20.0, &FlowParams::default());
        assert!(matches!(r, Err(GeometryError::Blowup { .. })), "{r:?}");
    }

    #[test]
    fn egorov_examples() {
        let roots = [sym("norm_xi"), sym("(1+sin(x1)^2)*norm_xi")];
        let p = pt(0.3, 1.5);
        let direct = roots[0].eval(&p).unwrap() - roots[1].eval(&p).unwrap();
        let at_zero = egorov_symbol(&roots, &[0, 1], &[0.0], &p, &FlowParams::default()).unwrap();
        assert!((at_zero - direct).abs() < 1e-14);

        let flat = [sym("norm_xi"), sym("2*norm_xi"), sym("-norm_xi")];
        let base = egorov_symbol(&flat, &[0, 1, 2], &[0.0, 0.0], &p, &FlowParams::default()).unwrap();
        let moved = egorov_symbol(&flat, &[0, 1, 2], &[0.4, 1.1], &p, &FlowParams::default()).unwrap();
        assert!((base - moved).abs() < 1e-12);
    }

    #[test]
    fn egorov_double_zero_at_glancing_point() {
        let roots = [sym("norm_xi"), sym("(1+sin(x1)^2)*norm_xi")];
        let p = pt(PI, 1.0);
        let g = |t: f64| egorov_symbol(&roots, &[0, 1], &[t], &p, &FlowParams::default()).unwrap();
        let h = 1e-3;
        let first = (g(h) - g(-h)) / (2.0 * h);
        let second = (g(h) - 2.0 * g(0.0) + g(-h)) / (h * h);
        assert!(first.abs() < 1e-8, "{first}");
        assert!((second + 2.0).abs() < 1e-4, "{second}");
    }

    #[test]
    fn never_meeting_roots_do_not_switch() {
        let roots = [sym("norm_xi"), sym("3*norm_xi")];
        let tr = broken_flow(&roots, &[0, 1], &pt(0.5, 1.0), 2.0, &FlowParams::default()).unwrap();
        assert!(!tr.complete && tr.switch_times.is_empty());
        assert!((tr.end().x()[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn start_on_multiplicity_set_switches_immediately() {
        let roots = [sym("norm_xi"), sym("(1+sin(x1)^2)*norm_xi")];
        let tr = broken_flow(&roots, &[0, 1], &pt(0.0, 1.0), 1.0, &FlowParams::default()).unwrap();
        assert!(tr.complete);
        assert_eq!(tr.switch_times, vec![0.0]);
        assert_eq!(tr.switch_kinds, vec![SwitchKind::Start]);
    }

    #[test]
    fn glancing_touch_is_found() {
        let roots = [sym("norm_xi"), sym("(1+sin(x1)^2)*norm_xi")];
        let p = pt(PI - 0.5, 1.0);
        let tr = broken_flow(&roots, &[0, 1], &p, 1.5, &FlowParams::default()).unwrap();
        assert!(tr.complete);
        assert_eq!(tr.switch_kinds, vec![SwitchKind::Touch]);
        assert!((tr.switch_times[0] - 0.5).abs() < 1e-8, "{:?}", tr.switch_times);
        let q = tr.switch_points[0];
        let d = (roots[0].eval(&q).unwrap() - roots[1].eval(&q).unwrap()).abs();
        assert!(d <= 1e-8 * q.xi_norm());
    }

    #[test]
    fn transversal_crossing_and_reversal() {
        let roots = [sym("norm_xi"), sym("(1+0.5*sin(x1))*norm_xi")];
        let p = pt(-0.6, 1.0);
        let tr = broken_flow(&roots, &[0, 1], &p, 2.0, &FlowParams::default()).unwrap();
        assert_eq!(tr.switch_kinds, vec![SwitchKind::Crossing]);
        assert!((tr.switch_times[0] - 0.6).abs() < 1e-8);
        let back: Vec<(usize, f64)> = tr.segments().into_iter().rev().map(|(j, d)| (j, -d)).collect();
        let q = flow_segments(&roots, &back, &tr.end(), &FlowParams::default()).unwrap();
        assert!((q.x()[0] - p.x()[0]).abs() < 1e-6 && (q.xi()[0] - p.xi()[0]).abs() < 1e-6);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let roots = [sym("norm_xi"), sym("(1+0.5*sin(x1))*norm_xi")];
        let tr = broken_flow(&roots, &[0, 1], &pt(-0.6, 1.0), 1.0, &FlowParams { dt: Some(0.1), ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,x1,xi1,active");
        assert_eq!(text.lines().count(), tr.states.len() + 1);
        assert!(tr.states.windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn sequence_enumeration() {
        assert_eq!(admissible_sequences(2, 3), vec![vec![0], vec![1], vec![0, 1], vec![1, 0], vec![0, 1, 0], vec![1, 0, 1]]);
        assert_eq!(admissible_sequences(3, 2).len(), 3 + 6);
    }

    #[test]
    fn single_root_wavefront_is_the_flow() {
        let rs = RootSystem::distinct(vec![sym("(1+sin(x1)^2)*norm_xi")]);
        let seeds = [pt(0.2, 1.0), pt(1.0, -2.0)];
        let wf = wavefront_propagate(&rs, &seeds, 1.0, 2, &FlowParams::default()).unwrap();
        assert_eq!(wf.len(), 2);
        for w in &wf {
            let e = flow_end(&rs.roots[0], &seeds[w.seed], 1.0, &FlowParams::default()).unwrap();
            assert!((w.end.x()[0] - e.x()[0]).abs() < 1e-10 && (w.end.xi()[0] - e.xi()[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn gap_wavefront_has_only_unbroken_flows() {
        let rs = RootSystem::distinct(vec![sym("norm_xi"), sym("-norm_xi")]);
        let wf = wavefront_propagate(&rs, &[pt(0.2, 1.0)], 1.0, 3, &FlowParams::default()).unwrap();
        assert!(wf.iter().all(|w| w.j.len() == 1));
        assert_eq!(wf.len(), 2);
    }

    #[test]
    fn constant_speed_rays_close() {
        let rs = RootSystem::distinct(vec![sym("norm_xi")]);
        let seeds: Vec<PhasePoint> = (0..8).map(|i| pt(0.7 * i as f64, if i % 2 == 0 { 1.0 } else { -2.0 })).collect();
        let r = detect_periods(&rs, &seeds, (1.0, 7.0), 1e-6, &FlowParams::default()).unwrap();
        assert_eq!(r.fraction, 1.0);
    }
}
