//! Example-system generators: first-order companion systems of weakly
//! hyperbolic scalar operators, and first-order reductions of second-order
//! equations.
//!
//! For L = ∂₁⋯∂_m + Σ_K b_K ∂^K + c with ∂_j = D_t + Op(λ_j), the unknown
//! U = (∂^J u)_J runs over all sequences J of distinct indices with
//! |J| ≤ m − 1, so there are 1 + Σ_{j=1}^{m−1} m!/j! components. Writing
//! D_t ∂^J u = ∂_i ∂^J u − λ_i ∂^J u with i the least index not in J gives
//! D_tU + AU + BU = F with A = diag(λ_i) and B of order zero: −1 above the
//! diagonal for |J| < m − 1, and the lower-order coefficients of L in the
//! rows with |J| = m − 1. The factors are taken to commute; the defect
//! max |{λ_j, λ_k}| is reported.

use std::collections::HashMap;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::characteristics::{
    condition_c, cosphere_samples, group_roots, BracketReport, ComplexSymbol, ConditionCParams, MatrixSymbol,
    RootSystem,
};
use crate::grid::{Grid, QuantizedOp, SpectralField, VectorField};
use crate::propagator::{PropagatorError, SystemSpec};
use crate::symdsl::{homogeneity_defect, parse, poisson, EvalError, PhasePoint, SymbolExpr};

/// Largest scalar order accepted by [`build_companion`].
pub const MAX_COMPANION_ORDER: usize = 3;
/// Relative homogeneity defect tolerated when validating orders.
pub const ORDER_TOL: f64 = 1e-6;
/// Slack in the sampled hyperbolicity test b₁² − 4c₂ ≥ 0.
pub const HYPERBOLICITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("companion systems are generated for m ∈ {{2, 3}}, got m = {0}")]
    Size(usize),
    #[error("not hyperbolic: b² − 4c = {value:e} at x = {x:?}, ξ = {xi:?}")]
    Hyperbolicity { value: f64, x: Vec<f64>, xi: Vec<f64> },
    #[error("{what} has order defect {defect:e} against order {order}")]
    Order { what: String, order: i32, defect: f64 },
    #[error("{0}")]
    Shape(String),
    #[error("roots must not depend on t")]
    TimeDependent,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// One operator c_j^J in ∂^J = Σ_j c_j^J D_t^j, of order |J| − j.
#[derive(Debug, Clone)]
pub struct CauchyTerm {
    pub seq: Vec<usize>,
    pub j: usize,
    pub expr: SymbolExpr,
}

/// Lower-order part of L and the Cauchy-data operators.
#[derive(Debug, Clone, Default)]
pub struct LowerTerms {
    /// b_K for ascending K with 1 ≤ |K| ≤ m − 1, order 0.
    pub b: Vec<(Vec<usize>, SymbolExpr)>,
    /// Order 0.
    pub c: Option<SymbolExpr>,
    /// Unlisted c_j^J are zero.
    pub cauchy: Vec<CauchyTerm>,
}

/// 1 + Σ_{j=1}^{m−1} m!/j!.
pub fn companion_size(m: usize) -> usize {
    let fact = |k: usize| (1..=k).product::<usize>();
    1 + (1..m).map(|j| fact(m) / fact(j)).sum::<usize>()
}

/// Sequences of distinct indices in 0..m of length ≤ m − 1, by length then lexicographically.
pub fn companion_components(m: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 1..m {
        let mut next = Vec::new();
        for s in &layer {
            for i in 0..m {
                if !s.contains(&i) {
                    let mut t = s.clone();
                    t.push(i);
                    next.push(t);
                }
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

#[derive(Debug, Clone)]
pub struct CompanionSystem {
    pub m: usize,
    /// Component J holds ∂^J u = ∂_{J[0]}⋯∂_{J[k−1]} u.
    pub components: Vec<Vec<usize>>,
    pub lambdas: Vec<SymbolExpr>,
    /// Diagonal of A.
    pub a: Vec<SymbolExpr>,
    pub b: MatrixSymbol,
    pub roots: RootSystem,
    /// max |{λ_j, λ_k}| / |ξ| over cosphere samples.
    pub commutator_defect: f64,
    cauchy: HashMap<(usize, usize), SymbolExpr>,
}

fn check_order(what: &str, e: &SymbolExpr, order: i32, samples: &[PhasePoint]) -> Result<(), SystemError> {
    if e.is_zero() {
        return Ok(());
    }
    let defect = homogeneity_defect(e, order as f64, samples)?;
    if defect > ORDER_TOL {
        return Err(SystemError::Order { what: what.into(), order, defect });
    }
    Ok(())
}

/// Builds the companion system of an order-m operator with roots λ_j (indices 0-based).
pub fn build_companion(m: usize, lambdas: &[SymbolExpr], lower: &LowerTerms) -> Result<CompanionSystem, SystemError> {
    if !(2..=MAX_COMPANION_ORDER).contains(&m) {
        return Err(SystemError::Size(m));
    }
    if lambdas.len() != m {
        return Err(SystemError::Shape(format!("{} roots for m = {m}", lambdas.len())));
    }
    if lambdas.iter().any(|l| l.depends_on_t()) {
        return Err(SystemError::TimeDependent);
    }
    let n = lambdas.iter().map(|l| l.dim()).max().unwrap_or(1);
    let samples = cosphere_samples(n, if n == 1 { 16 } else { 6 });
    for (i, l) in lambdas.iter().enumerate() {
        check_order(&format!("λ_{i}"), l, 1, &samples)?;
    }
    let components = companion_components(m);
    let index: HashMap<&[usize], usize> = components.iter().enumerate().map(|(i, s)| (s.as_slice(), i)).collect();
    let size = components.len();
    debug_assert_eq!(size, companion_size(m));

    let mut b = MatrixSymbol::zeros(size, n, 0);
    let mut a = Vec::with_capacity(size);
    let top_row_terms: Vec<(usize, SymbolExpr)> = {
        let mut terms = Vec::new();
        if let Some(c) = &lower.c {
            check_order("c", c, 0, &samples)?;
            terms.push((0, c.clone()));
        }
        for (k, e) in &lower.b {
            let ascending = k.windows(2).all(|w| w[0] < w[1]);
            if k.is_empty() || k.len() >= m || !ascending || k.iter().any(|&i| i >= m) {
                return Err(SystemError::Shape(format!("b_K needs ascending K ⊂ 0..{m} with 1 ≤ |K| ≤ {}, got {k:?}", m - 1)));
            }
            check_order(&format!("b_{k:?}"), e, 0, &samples)?;
            terms.push((index[k.as_slice()], e.clone()));
        }
        terms
    };
    for (row, seq) in components.iter().enumerate() {
        let i = (0..m).find(|i| !seq.contains(i)).expect("|J| < m leaves an index free");
        a.push(lambdas[i].clone());
        if seq.len() + 1 < m {
            let mut next = vec![i];
            next.extend_from_slice(seq);
            b.set(row, index[next.as_slice()], ComplexSymbol::real(SymbolExpr::constant(-1.0, n)));
        } else {
            for (col, e) in &top_row_terms {
                let cur = b.entry(row, *col).re.clone();
                b.set(row, *col, ComplexSymbol::real(cur.add(e)));
            }
        }
    }

    let mut cauchy = HashMap::new();
    for t in &lower.cauchy {
        let Some(&row) = index.get(t.seq.as_slice()) else {
            return Err(SystemError::Shape(format!("no component {:?}", t.seq)));
        };
        if t.j >= t.seq.len() {
            return Err(SystemError::Shape(format!("c_j^J needs j < |J|, got j = {} for J = {:?}", t.j, t.seq)));
        }
        let order = (t.seq.len() - t.j) as i32;
        check_order(&format!("c_{}^{:?}", t.j, t.seq), &t.expr, order, &samples)?;
        cauchy.insert((row, t.j), t.expr.clone());
    }

    let mut commutator_defect: f64 = 0.0;
    for j in 0..m {
        for k in j + 1..m {
            for p in &samples {
                commutator_defect = commutator_defect.max(poisson(&lambdas[j], &lambdas[k], p)?.abs() / p.xi_norm());
            }
        }
    }
    let roots = group_roots(&a, &samples);
    Ok(CompanionSystem { m, components, lambdas: lambdas.to_vec(), a, b, roots, commutator_defect, cauchy })
}

impl CompanionSystem {
    pub fn size(&self) -> usize {
        self.components.len()
    }

    pub fn spec(&self, grid: Grid, horizon: f64) -> Result<SystemSpec, PropagatorError> {
        SystemSpec::new(self.roots.clone(), self.b.clone(), grid, horizon)
    }

    /// U(0) with U_J(0) = g_{|J|} + Σ_{j<|J|} Op(c_j^J) g_j, where g_j = D_t^j u(0).
    pub fn cauchy_data(&self, g: &[SpectralField]) -> Result<VectorField, SystemError> {
        if g.len() != self.m {
            return Err(SystemError::Shape(format!("{} Cauchy data for m = {}", g.len(), self.m)));
        }
        let grid = g[0].grid().clone();
        let mut comps = Vec::with_capacity(self.size());
        for (row, seq) in self.components.iter().enumerate() {
            let k = seq.len();
            let mut acc = g[k].spec().to_vec();
            for j in 0..k {
                if let Some(e) = self.cauchy.get(&(row, j)) {
                    let op = QuantizedOp::from_symbol(e, &grid, 0.0)?;
                    op.apply_add(g[j].spec(), C64::new(1.0, 0.0), &mut acc);
                }
            }
            comps.push(SpectralField::from_spectral(&grid, acc).map_err(|e| SystemError::Shape(e.to_string()))?);
        }
        VectorField::new(comps).map_err(|e| SystemError::Shape(e.to_string()))
    }

    /// The c_j^J of commuting factors, e_{|J|−j}(λ_J) as symbol products, for use in [`LowerTerms::cauchy`].
    pub fn factorized_cauchy_terms(lambdas: &[SymbolExpr]) -> Vec<CauchyTerm> {
        let m = lambdas.len();
        let n = lambdas.iter().map(|l| l.dim()).max().unwrap_or(1);
        let mut out = Vec::new();
        for seq in companion_components(m).into_iter().filter(|s| !s.is_empty()) {
            let k = seq.len();
            for j in 0..k {
                let mut sum: Option<SymbolExpr> = None;
                for mask in 0u32..(1 << k) {
                    if mask.count_ones() as usize != k - j {
                        continue;
                    }
                    let term = (0..k)
                        .filter(|b| mask & (1 << b) != 0)
                        .fold(SymbolExpr::constant(1.0, n), |acc, b| acc.mul(&lambdas[seq[b]]));
                    sum = Some(match sum {
                        Some(s) => s.add(&term),
                        None => term,
                    });
                }
                let expr = sum.expect("k − j ≤ k leaves at least one subset").with_homogeneity((k - j) as f64);
                out.push(CauchyTerm { seq: seq.clone(), j, expr });
            }
        }
        out
    }
}

/// D_t² u + b D_t u + c u = 0 reduced to D_t v = Mv, v = (⟨D⟩u, D_t u).
#[derive(Debug, Clone)]
pub struct SecondOrderSystem {
    /// M = [[0, ⟨D⟩], [−⟨D⟩^{−1}c, −b]].
    pub matrix: MatrixSymbol,
    pub b: SymbolExpr,
    pub c: SymbolExpr,
    /// μ with μ² = b² − 4c.
    pub mu: SymbolExpr,
    /// a_{1,2} = (−b ± μ)/2.
    pub roots: RootSystem,
    pub report: BracketReport,
    /// min over samples of (b² − 4c)/|ξ|².
    pub discriminant_min: f64,
}

/// Reduces a second-order equation with symbols b (order 1) and c (order 2).
/// `mu` overrides the root √(b² − 4c) with a smooth choice; it is checked against μ² = b² − 4c.
pub fn build_second_order(
    b: &SymbolExpr,
    c: &SymbolExpr,
    mu: Option<&SymbolExpr>,
    params: &ConditionCParams,
) -> Result<SecondOrderSystem, SystemError> {
    if b.depends_on_t() || c.depends_on_t() || mu.is_some_and(|m| m.depends_on_t()) {
        return Err(SystemError::TimeDependent);
    }
    let n = b.dim().max(c.dim()).max(mu.map_or(1, |m| m.dim()));
    let samples = cosphere_samples(n, if n == 1 { 64 } else { 12 });
    check_order("b", b, 1, &samples)?;
    check_order("c", c, 2, &samples)?;
    let disc = b.mul(b).sub(&c.scale(4.0));
    let mut discriminant_min = f64::INFINITY;
    for p in &samples {
        let v = disc.eval(p)? / p.xi_norm().powi(2);
        discriminant_min = discriminant_min.min(v);
        if v < -HYPERBOLICITY_TOL {
            return Err(SystemError::Hyperbolicity { value: v, x: p.x().to_vec(), xi: p.xi().to_vec() });
        }
    }
    let mu = match mu {
        Some(m) => {
            check_order("μ", m, 1, &samples)?;
            for p in &samples {
                let d = m.eval(p)?.powi(2) - disc.eval(p)?;
                if d.abs() > 1e-8 * p.xi_norm().powi(2) {
                    return Err(SystemError::Shape(format!("μ² ≠ b² − 4c at x = {:?}, ξ = {:?}", p.x(), p.xi())));
                }
            }
            m.clone()
        }
        None => disc.sqrt().with_homogeneity(1.0),
    };
    let jnorm = parse("jnorm_xi", n).expect("built-in identifier");
    let zero = SymbolExpr::constant(0.0, n);
    let matrix = MatrixSymbol::new(
        2,
        n,
        1,
        vec![
            ComplexSymbol::real(zero),
            ComplexSymbol::real(jnorm.clone()),
            ComplexSymbol::real(c.div(&jnorm).neg()),
            ComplexSymbol::real(b.neg()),
        ],
    )
    .map_err(|e| SystemError::Shape(e.to_string()))?;
    let a1 = b.neg().add(&mu).scale(0.5).with_homogeneity(1.0);
    let a2 = b.neg().sub(&mu).scale(0.5).with_homogeneity(1.0);
    let roots = group_roots(&[a1, a2], &samples);
    let report = condition_c(&roots, params);
    Ok(SecondOrderSystem { matrix, b: b.clone(), c: c.clone(), mu, roots, report, discriminant_min })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::PairStatus;
    use crate::propagator::{Propagator, PropagatorParams};

    fn p1(s: &str) -> SymbolExpr {
        parse(s, 1).unwrap()
    }

    #[test]
    fn sizes_follow_the_factorial_sum() {
        assert_eq!(companion_size(2), 3);
        assert_eq!(companion_size(3), 10);
        assert_eq!(companion_components(2).len(), 3);
        assert_eq!(companion_components(3).len(), 10);
        let lam = [p1("norm_xi"), p1("2*norm_xi"), p1("3*norm_xi")];
        assert_eq!(build_companion(3, &lam, &LowerTerms::default()).unwrap().size(), 10);
        assert!(matches!(build_companion(4, &[], &LowerTerms::default()), Err(SystemError::Size(4))));
    }

    #[test]
    fn structure_of_b_for_m_three() {
        let lam = [p1("norm_xi"), p1("2*norm_xi"), p1("3*norm_xi")];
        let lower = LowerTerms { c: Some(p1("cos(x1)")), b: vec![(vec![0, 2], p1("0.5"))], cauchy: vec![] };
        let sys = build_companion(3, &lam, &lower).unwrap();
        let idx = |s: &[usize]| sys.components.iter().position(|c| c == s).unwrap();
        let p = PhasePoint::one_dim(0.3, 1.0).unwrap();
        let b = sys.b.eval(&p).unwrap();
        // ∂_∅ → ∂_0, ∂_(1) → ∂_(0,1), ∂_(0) → ∂_(1,0)
        assert_eq!(b[(idx(&[]), idx(&[0]))].re, -1.0);
        assert_eq!(b[(idx(&[1]), idx(&[0, 1]))].re, -1.0);
        assert_eq!(b[(idx(&[0]), idx(&[1, 0]))].re, -1.0);
        for top in sys.components.iter().filter(|s| s.len() == 2) {
            let r = idx(top);
            assert!((b[(r, 0)].re - 0.3f64.cos()).abs() < 1e-15);
            assert_eq!(b[(r, idx(&[0, 2]))].re, 0.5);
        }
        assert_eq!(sys.a[idx(&[0, 1])].to_string(), lam[2].to_string());
        assert_eq!(sys.commutator_defect, 0.0);
    }

    #[test]
    fn orders_are_validated() {
        let lam = [p1("norm_xi"), p1("norm_xi")];
        let lower = LowerTerms { c: Some(p1("xi1")), ..Default::default() };
        assert!(matches!(build_companion(2, &lam, &lower), Err(SystemError::Order { order: 0, .. })));
        let cauchy = vec![CauchyTerm { seq: vec![0], j: 0, expr: p1("1") }];
        let lower = LowerTerms { cauchy, ..Default::default() };
        assert!(matches!(build_companion(2, &lam, &lower), Err(SystemError::Order { order: 1, .. })));
    }

    #[test]
    fn double_root_matches_the_jordan_block() {
        let lam = p1("norm_xi");
        let cauchy = CompanionSystem::factorized_cauchy_terms(&[lam.clone(), lam.clone()]);
        let lower = LowerTerms { cauchy, ..Default::default() };
        let sys = build_companion(2, &[lam.clone(), lam.clone()], &lower).unwrap();
        assert_eq!(sys.roots.groups.len(), 1);
        let grid = Grid::line(128).unwrap();
        let g0 = SpectralField::from_fn(&grid, |x| C64::new((x[0]).sin().exp(), 0.0));
        let g1 = SpectralField::from_fn(&grid, |x| C64::new(0.0, (2.0 * x[0]).cos()));
        let u0 = sys.cauchy_data(&[g0.clone(), g1.clone()]).unwrap();
        let t = 0.7;
        let prop = Propagator::new(sys.spec(grid.clone(), 1.0).unwrap(), PropagatorParams::default()).unwrap();
        let rep = prop.picard_solve(&u0, t, 3, 16).unwrap();
        // u(t) = e^{−iλt}(g₀ + it(g₁ + λg₀))
        let lam_k: Vec<f64> = grid.modes().iter().map(|k| crate::symdsl::reg_abs(k[0] as f64)).collect();
        let exact: Vec<C64> = (0..grid.len())
            .map(|i| {
                let adj = g1.spec()[i] + lam_k[i] * g0.spec()[i];
                C64::from_polar(1.0, -lam_k[i] * t) * (g0.spec()[i] + C64::new(0.0, t) * adj)
            })
            .collect();
        let exact = SpectralField::from_spectral(&grid, exact).unwrap();
        let err = rep.u.component(0).sub(&exact).unwrap().l2_norm();
        assert!(err <= 1e-7, "error {err:e}");
    }

    #[test]
    fn wave_equation_has_an_elliptic_gap() {
        let sys = build_second_order(&p1("0"), &p1("-xi1^2"), None, &ConditionCParams::default()).unwrap();
        let p = PhasePoint::one_dim(1.0, 3.0).unwrap();
        let v: Vec<f64> = sys.roots.roots.iter().map(|r| r.eval(&p).unwrap()).collect();
        assert!((v[0] - 3.0).abs() < 1e-12 && (v[1] + 3.0).abs() < 1e-12);
        assert_eq!(sys.report.m, Some(0));
        assert!(sys.report.pairs.iter().all(|r| r.status == PairStatus::Strict));
        assert!(matches!(
            build_second_order(&p1("0"), &p1("xi1^2"), None, &ConditionCParams::default()),
            Err(SystemError::Hyperbolicity { .. })
        ));
    }

    #[test]
    fn perfect_square_gives_one_group() {
        let sys = build_second_order(&p1("2*norm_xi"), &p1("xi1^2"), None, &ConditionCParams::default()).unwrap();
        assert_eq!(sys.roots.groups, vec![vec![0, 1]]);
        let p = PhasePoint::one_dim(0.4, -2.0).unwrap();
        assert!((sys.roots.roots[0].eval(&p).unwrap() + 2.0).abs() < 1e-12);
        let m = sys.matrix.eval(&p).unwrap();
        assert!((m[(0, 1)].re - (5.0f64).sqrt()).abs() < 1e-12);
        assert!((m[(1, 0)].re + 4.0 / 5.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn crossing_roots_have_finite_order() {
        // μ = sin(x)|ξ|, b = 2|ξ|: {a₁, a₂} = ½{b, μ} = cos(x)|ξ|·sgn ξ ≠ 0 where sin x = 0
        let b = p1("2*norm_xi");
        let mu = p1("sin(x1)*norm_xi");
        let c = p1("(4 - sin(x1)^2)*xi1^2/4");
        let sys = build_second_order(&b, &c, Some(&mu), &ConditionCParams::default()).unwrap();
        assert_eq!(sys.report.m, Some(1));
        let (a1, a2) = (&sys.roots.roots[0], &sys.roots.roots[1]);
        for x in [0.0, 1.0, 3.0] {
            let p = PhasePoint::one_dim(x, 1.5).unwrap();
            let lhs = poisson(a1, a2, &p).unwrap();
            let rhs = 0.5 * poisson(&b, &mu, &p).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
        assert!(matches!(
            build_second_order(&b, &c, Some(&p1("norm_xi")), &ConditionCParams::default()),
            Err(SystemError::Shape(_))
        ));
    }
}
