//! Phase-space symbol expressions.
//!
//! A [`SymbolExpr`] is a parsed, immutable expression in the variables
//! `x1..xn`, `xi1..xin` (and optionally `t`), evaluated either exactly on
//! the cotangent bundle ([`EvalMode::Exact`]) or with the low-frequency
//! regularization used by the grid quantization ([`EvalMode::Regularized`]).
//!
//! Jets carry exact first derivatives computed by forward-mode dual
//! numbers. Iterated Poisson brackets are built symbolically, so every
//! nested bracket is again an ordinary expression whose jet is exact.

mod node;
mod parse;
mod tape;

use std::f64::consts::TAU;
use std::fmt;
use std::sync::{Arc, OnceLock};

use thiserror::Error;

pub use node::{Func, Node, Var};
use node::NodeRef;
use tape::Tape;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Default cap on the nesting depth of iterated brackets.
pub const DEFAULT_BRACKET_CAP: u32 = 8;

/// Jets of `abs` and `norm_xi` are undefined this close to the origin.
pub const XI_SINGULAR: f64 = 1e-8;

/// Regularization of |ξ| near the origin: (REG_EPS + |ξ|²)^{1/2} for |ξ| < REG_RADIUS.
pub const REG_EPS: f64 = 1e-4;
pub const REG_RADIUS: f64 = 2.0;

/// The regularized modulus used on grids: (ε + v²)^{1/2} for |v| < 2, |v| above.
pub fn reg_abs(v: f64) -> f64 {
    if v.abs() < REG_RADIUS {
        (REG_EPS + v * v).sqrt()
    } else {
        v.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("variable '{name}' exceeds the spatial dimension {dim}")]
    Dimension { name: String, dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("derivative requested at |ξ| = 0 (or |u| = 0 inside abs)")]
    Singular,
    #[error("non-finite value")]
    NonFinite,
    #[error("point dimension {got} does not match expression dimension {want}")]
    Dimension { got: usize, want: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum BracketError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("bracket depth {depth} exceeds the cap {cap}")]
    Depth { depth: u32, cap: u32 },
    #[error("bracket depth must be at least 1")]
    ZeroDepth,
}

/// How `abs` and `norm_xi` behave near zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalMode {
    /// True moduli; jets fail within [`XI_SINGULAR`] of the kink.
    #[default]
    Exact,
    /// Moduli replaced by [`reg_abs`]; smooth everywhere.
    Regularized,
}

/// A point (x, ξ) of T*Tⁿ, with x reduced to [0, 2π)ⁿ and ξ ≠ 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint {
    n: usize,
    x: [f64; MAX_DIM],
    xi: [f64; MAX_DIM],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PointError {
    #[error("dimension must be between 1 and {MAX_DIM}, x and ξ must agree")]
    Dimension,
    #[error("ξ must be non-zero")]
    ZeroCovector,
    #[error("non-finite coordinate")]
    NonFinite,
}

impl PhasePoint {
    pub fn new(x: &[f64], xi: &[f64]) -> Result<Self, PointError> {
        let n = x.len();
        if n == 0 || n > MAX_DIM || xi.len() != n {
            return Err(PointError::Dimension);
        }
        if x.iter().chain(xi).any(|v| !v.is_finite()) {
            return Err(PointError::NonFinite);
        }
        if xi.iter().all(|v| *v == 0.0) {
            return Err(PointError::ZeroCovector);
        }
        let mut p = PhasePoint { n, x: [0.0; MAX_DIM], xi: [0.0; MAX_DIM] };
        for k in 0..n {
            p.x[k] = x[k].rem_euclid(TAU);
            p.xi[k] = xi[k];
        }
        Ok(p)
    }

    /// Builds a point without reducing x; used by flows on non-periodic symbols.
    pub(crate) fn raw(n: usize, x: &[f64], xi: &[f64]) -> Self {
        let mut p = PhasePoint { n, x: [0.0; MAX_DIM], xi: [0.0; MAX_DIM] };
        p.x[..n].copy_from_slice(&x[..n]);
        p.xi[..n].copy_from_slice(&xi[..n]);
        p
    }

    pub fn one_dim(x: f64, xi: f64) -> Result<Self, PointError> {
        Self::new(&[x], &[xi])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn x(&self) -> &[f64] {
        &self.x[..self.n]
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi[..self.n]
    }

    pub fn xi_norm(&self) -> f64 {
        self.xi().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Same point with x reduced mod 2π.
    pub fn reduced(&self) -> Self {
        let mut p = *self;
        for k in 0..self.n {
            p.x[k] = p.x[k].rem_euclid(TAU);
        }
        p
    }

    /// Same x, ξ scaled by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut p = *self;
        for k in 0..self.n {
            p.xi[k] *= s;
        }
        p
    }
}

/// Value and exact first derivatives of a symbol at a phase point.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub dx: Vec<f64>,
    pub dxi: Vec<f64>,
}

/// Parsed phase-space symbol. Cheap to clone; safe to share across threads.
#[derive(Clone)]
pub struct SymbolExpr {
    root: NodeRef,
    n: usize,
    homogeneity: Option<f64>,
    tape: Arc<OnceLock<Tape>>,
}

impl fmt::Debug for SymbolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymbolExpr({}, n={})", self.root, self.n)
    }
}

impl fmt::Display for SymbolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

/// Parses `text` as a symbol on T*Tⁿ.
pub fn parse(text: &str, n: usize) -> Result<SymbolExpr, ParseError> {
    if n == 0 || n > MAX_DIM {
        return Err(ParseError::Dimension { name: format!("dimension {n}"), dim: MAX_DIM });
    }
    let root = parse::Parser::new(text, n)?.parse_all()?;
    Ok(SymbolExpr::from_node(root, n))
}

thread_local! {
    static VALUE_BUF: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
    static DUAL_BUF: std::cell::RefCell<Vec<tape::Dual>> = const { std::cell::RefCell::new(Vec::new()) };
}

impl SymbolExpr {
    fn from_node(root: NodeRef, n: usize) -> Self {
        SymbolExpr { root, n, homogeneity: None, tape: Arc::new(OnceLock::new()) }
    }

    pub fn constant(c: f64, n: usize) -> Self {
        Self::from_node(node::constant(c), n)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn node(&self) -> &Node {
        &self.root
    }

    pub fn homogeneity(&self) -> Option<f64> {
        self.homogeneity
    }

    /// Tags the symbol as homogeneous of degree `d` in ξ (see [`check_homogeneity`]).
    pub fn with_homogeneity(mut self, d: f64) -> Self {
        self.homogeneity = Some(d);
        self
    }

    fn tape(&self) -> &Tape {
        self.tape.get_or_init(|| Tape::compile(&self.root))
    }

    /// Number of distinct subexpressions after deduplication.
    pub fn tape_len(&self) -> usize {
        self.tape().len()
    }

    pub fn depends_on_x(&self) -> bool {
        self.root.depends_on(&|v| matches!(v, Var::X(_)))
    }

    pub fn depends_on_xi(&self) -> bool {
        self.root.depends_on(&|v| matches!(v, Var::Xi(_)))
    }

    pub fn depends_on_t(&self) -> bool {
        self.root.depends_on(&|v| v == Var::T)
    }

    pub fn is_zero(&self) -> bool {
        self.root.as_const() == Some(0.0)
    }

    /// Value at raw coordinates.
    pub fn eval_at(&self, x: &[f64], xi: &[f64], t: f64, mode: EvalMode) -> Result<f64, EvalError> {
        if x.len() != self.n || xi.len() != self.n {
            return Err(EvalError::Dimension { got: x.len(), want: self.n });
        }
        VALUE_BUF.with(|b| self.tape().eval(x, xi, t, mode, &mut b.borrow_mut()))
    }

    pub fn eval(&self, p: &PhasePoint) -> Result<f64, EvalError> {
        self.eval_at(p.x(), p.xi(), 0.0, EvalMode::Exact)
    }

    pub fn jet_at(&self, x: &[f64], xi: &[f64], t: f64, mode: EvalMode) -> Result<Jet, EvalError> {
        if x.len() != self.n || xi.len() != self.n {
            return Err(EvalError::Dimension { got: x.len(), want: self.n });
        }
        let d = DUAL_BUF.with(|b| self.tape().eval_dual(x, xi, t, mode, &mut b.borrow_mut()))?;
        let n = self.n;
        let dx = d.g[..n].to_vec();
        let dxi = d.g[MAX_DIM..MAX_DIM + n].to_vec();
        if dx.iter().chain(&dxi).any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite);
        }
        Ok(Jet { value: d.v, dx, dxi })
    }

    /// Symbolic partial derivative.
    pub fn diff(&self, wrt: Var) -> SymbolExpr {
        Self::from_node(node::diff(&self.root, wrt), self.n)
    }

    /// The bracket {self, g} as a new expression.
    pub fn bracket(&self, g: &SymbolExpr) -> SymbolExpr {
        let n = self.n.max(g.n);
        let mut acc = node::constant(0.0);
        for k in 0..n {
            let term = node::sub(
                node::mul(node::diff(&self.root, Var::Xi(k)), node::diff(&g.root, Var::X(k))),
                node::mul(node::diff(&self.root, Var::X(k)), node::diff(&g.root, Var::Xi(k))),
            );
            acc = node::add(acc, term);
        }
        Self::from_node(acc, n)
    }

    fn combine(&self, other: &SymbolExpr, op: fn(NodeRef, NodeRef) -> NodeRef) -> SymbolExpr {
        Self::from_node(op(self.root.clone(), other.root.clone()), self.n.max(other.n))
    }

    pub fn add(&self, other: &SymbolExpr) -> SymbolExpr {
        self.combine(other, node::add)
    }

    pub fn sub(&self, other: &SymbolExpr) -> SymbolExpr {
        self.combine(other, node::sub)
    }

    pub fn mul(&self, other: &SymbolExpr) -> SymbolExpr {
        self.combine(other, node::mul)
    }

    pub fn div(&self, other: &SymbolExpr) -> SymbolExpr {
        self.combine(other, node::div)
    }

    pub fn scale(&self, c: f64) -> SymbolExpr {
        Self::from_node(node::mul(node::constant(c), self.root.clone()), self.n)
    }

    pub fn neg(&self) -> SymbolExpr {
        Self::from_node(node::neg(self.root.clone()), self.n)
    }

    pub fn sqrt(&self) -> SymbolExpr {
        Self::from_node(node::call(Func::Sqrt, self.root.clone()), self.n)
    }

    /// Replaces `t` by a constant.
    pub fn at_time(&self, t: f64) -> SymbolExpr {
        fn subst(node: &NodeRef, t: f64) -> NodeRef {
            match &**node {
                Node::Var(Var::T) => node::constant(t),
                Node::Const(_) | Node::Var(_) | Node::NormXi | Node::JnormXi => node.clone(),
                Node::Neg(a) => node::neg(subst(a, t)),
                Node::Add(a, b) => node::add(subst(a, t), subst(b, t)),
                Node::Sub(a, b) => node::sub(subst(a, t), subst(b, t)),
                Node::Mul(a, b) => node::mul(subst(a, t), subst(b, t)),
                Node::Div(a, b) => node::div(subst(a, t), subst(b, t)),
                Node::Pow(a, b) => node::pow(subst(a, t), subst(b, t)),
                Node::Call(f, a) => node::call(*f, subst(a, t)),
            }
        }
        Self::from_node(subst(&self.root, t), self.n)
    }
}

/// Jet of `a` at `p` with exact forward-mode derivatives.
pub fn eval_jet(a: &SymbolExpr, p: &PhasePoint) -> Result<Jet, EvalError> {
    a.jet_at(p.x(), p.xi(), 0.0, EvalMode::Exact)
}

/// {f, g}(p) = Σ_k (∂_ξk f ∂_xk g − ∂_xk f ∂_ξk g).
pub fn poisson(f: &SymbolExpr, g: &SymbolExpr, p: &PhasePoint) -> Result<f64, EvalError> {
    let jf = eval_jet(f, p)?;
    let jg = eval_jet(g, p)?;
    Ok(poisson_from_jets(&jf, &jg))
}

pub(crate) fn poisson_from_jets(jf: &Jet, jg: &Jet) -> f64 {
    (0..jf.dx.len().min(jg.dx.len()))
        .map(|k| jf.dxi[k] * jg.dx[k] - jf.dx[k] * jg.dxi[k])
        .sum()
}

/// H_f^λ g as an expression: λ − 1 symbolic brackets. The outermost
/// bracket is left for the jet evaluation in [`iterated_bracket`].
pub fn iterated_bracket_expr(f: &SymbolExpr, g: &SymbolExpr, lambda: u32) -> SymbolExpr {
    (0..lambda).fold(g.clone(), |acc, _| f.bracket(&acc))
}

/// H_f^λ g at `p`, with λ ≤ `cap`.
pub fn iterated_bracket_capped(
    f: &SymbolExpr,
    g: &SymbolExpr,
    lambda: u32,
    p: &PhasePoint,
    cap: u32,
) -> Result<f64, BracketError> {
    if lambda == 0 {
        return Err(BracketError::ZeroDepth);
    }
    if lambda > cap {
        return Err(BracketError::Depth { depth: lambda, cap });
    }
    let inner = iterated_bracket_expr(f, g, lambda - 1);
    Ok(poisson(f, &inner, p)?)
}

pub fn iterated_bracket(f: &SymbolExpr, g: &SymbolExpr, lambda: u32, p: &PhasePoint) -> Result<f64, BracketError> {
    iterated_bracket_capped(f, g, lambda, p, DEFAULT_BRACKET_CAP)
}

/// Largest relative deviation from degree-`d` homogeneity,
/// |a(x, sξ) − s^d a(x, ξ)| / (s^d |a(x, ξ)|) over s ∈ {2, 4} and the given points.
pub fn homogeneity_defect(a: &SymbolExpr, d: f64, points: &[PhasePoint]) -> Result<f64, EvalError> {
    let mut worst: f64 = 0.0;
    for p in points {
        let base = a.eval(p)?;
        for s in [2.0f64, 4.0] {
            let scaled = a.eval(&p.scaled(s))?;
            let sd = s.powf(d);
            let denom = (sd * base.abs()).max(f64::MIN_POSITIVE);
            worst = worst.max((scaled - sd * base).abs() / denom);
        }
    }
    Ok(worst)
}
