//! Expression tree for phase-space symbols and its symbolic derivative.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

/// A variable of a phase-space symbol. Indices are zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    X(usize),
    Xi(usize),
    T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Sign,
}

impl Func {
    pub(crate) fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Const(f64),
    Var(Var),
    /// |ξ|
    NormXi,
    /// ⟨ξ⟩ = (1 + |ξ|²)^{1/2}
    JnormXi,
    Neg(Arc<Node>),
    Add(Arc<Node>, Arc<Node>),
    Sub(Arc<Node>, Arc<Node>),
    Mul(Arc<Node>, Arc<Node>),
    Div(Arc<Node>, Arc<Node>),
    Pow(Arc<Node>, Arc<Node>),
    Call(Func, Arc<Node>),
}

pub type NodeRef = Arc<Node>;

impl Node {
    pub fn as_const(&self) -> Option<f64> {
        match self {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Visits every variable reference (including the implicit ξ of the norms).
    pub fn depends_on(&self, pred: &dyn Fn(Var) -> bool) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var(v) => pred(*v),
            Node::NormXi | Node::JnormXi => (0..super::MAX_DIM).any(|k| pred(Var::Xi(k))),
            Node::Neg(a) | Node::Call(_, a) => a.depends_on(pred),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.depends_on(pred) || b.depends_on(pred)
            }
        }
    }

    pub fn max_index(&self) -> Option<usize> {
        match self {
            Node::Var(Var::X(i)) | Node::Var(Var::Xi(i)) => Some(*i),
            Node::Const(_) | Node::Var(Var::T) | Node::NormXi | Node::JnormXi => None,
            Node::Neg(a) | Node::Call(_, a) => a.max_index(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                match (a.max_index(), b.max_index()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }
}

pub fn constant(c: f64) -> NodeRef {
    Arc::new(Node::Const(c))
}

pub fn var(v: Var) -> NodeRef {
    Arc::new(Node::Var(v))
}

pub fn neg(a: NodeRef) -> NodeRef {
    match &*a {
        Node::Const(c) => constant(-c),
        Node::Neg(inner) => inner.clone(),
        _ => Arc::new(Node::Neg(a)),
    }
}

pub fn add(a: NodeRef, b: NodeRef) -> NodeRef {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => constant(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => match &*b {
            Node::Neg(inner) => Arc::new(Node::Sub(a, inner.clone())),
            _ => Arc::new(Node::Add(a, b)),
        },
    }
}

pub fn sub(a: NodeRef, b: NodeRef) -> NodeRef {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => constant(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => match &*b {
            Node::Neg(inner) => Arc::new(Node::Add(a, inner.clone())),
            _ => Arc::new(Node::Sub(a, b)),
        },
    }
}

pub fn mul(a: NodeRef, b: NodeRef) -> NodeRef {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => constant(x * y),
        (Some(x), _) if x == 0.0 => constant(0.0),
        (_, Some(y)) if y == 0.0 => constant(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), _) if x == -1.0 => neg(b),
        (_, Some(y)) if y == -1.0 => neg(a),
        _ => Arc::new(Node::Mul(a, b)),
    }
}

pub fn div(a: NodeRef, b: NodeRef) -> NodeRef {
    match (a.as_const(), b.as_const()) {
        (Some(x), _) if x == 0.0 => constant(0.0),
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), Some(y)) if y != 0.0 => constant(x / y),
        _ => Arc::new(Node::Div(a, b)),
    }
}

pub fn pow(a: NodeRef, b: NodeRef) -> NodeRef {
    match (a.as_const(), b.as_const()) {
        (_, Some(y)) if y == 0.0 => constant(1.0),
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), Some(y)) if x > 0.0 || y.fract() == 0.0 => constant(x.powf(y)),
        _ => Arc::new(Node::Pow(a, b)),
    }
}

pub fn call(f: Func, a: NodeRef) -> NodeRef {
    if let Some(c) = a.as_const() {
        let folded = match f {
            Func::Sin => Some(c.sin()),
            Func::Cos => Some(c.cos()),
            Func::Exp => Some(c.exp()),
            Func::Ln if c > 0.0 => Some(c.ln()),
            Func::Sqrt if c >= 0.0 => Some(c.sqrt()),
            Func::Abs => Some(c.abs()),
            Func::Sign => Some(sign(c)),
            _ => None,
        };
        if let Some(v) = folded {
            return constant(v);
        }
    }
    Arc::new(Node::Call(f, a))
}

pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Symbolic partial derivative. Shared subtrees are differentiated once.
pub fn diff(node: &NodeRef, wrt: Var) -> NodeRef {
    let mut memo = HashMap::new();
    diff_memo(node, wrt, &mut memo)
}

fn diff_memo(node: &NodeRef, wrt: Var, memo: &mut HashMap<*const Node, NodeRef>) -> NodeRef {
    let key = Arc::as_ptr(node);
    if let Some(d) = memo.get(&key) {
        return d.clone();
    }
    let d = match &**node {
        Node::Const(_) => constant(0.0),
        Node::Var(v) => constant(if *v == wrt { 1.0 } else { 0.0 }),
        Node::NormXi => match wrt {
            Var::Xi(k) => div(var(Var::Xi(k)), node.clone()),
            _ => constant(0.0),
        },
        Node::JnormXi => match wrt {
            Var::Xi(k) => div(var(Var::Xi(k)), node.clone()),
            _ => constant(0.0),
        },
        Node::Neg(a) => neg(diff_memo(a, wrt, memo)),
        Node::Add(a, b) => add(diff_memo(a, wrt, memo), diff_memo(b, wrt, memo)),
        Node::Sub(a, b) => sub(diff_memo(a, wrt, memo), diff_memo(b, wrt, memo)),
        Node::Mul(a, b) => {
            let da = diff_memo(a, wrt, memo);
            let db = diff_memo(b, wrt, memo);
            add(mul(da, b.clone()), mul(a.clone(), db))
        }
        Node::Div(a, b) => {
            let da = diff_memo(a, wrt, memo);
            let db = diff_memo(b, wrt, memo);
            // (a/b)' = a'/b − a b'/b²
            sub(div(da, b.clone()), div(mul(a.clone(), db), mul(b.clone(), b.clone())))
        }
        Node::Pow(a, b) => {
            let da = diff_memo(a, wrt, memo);
            match b.as_const() {
                Some(c) => mul(mul(constant(c), pow(a.clone(), constant(c - 1.0))), da),
                None => {
                    let db = diff_memo(b, wrt, memo);
                    let inner = add(
                        mul(db, call(Func::Ln, a.clone())),
                        div(mul(b.clone(), da), a.clone()),
                    );
                    mul(node.clone(), inner)
                }
            }
        }
        Node::Call(f, a) => {
            let da = diff_memo(a, wrt, memo);
            if da.as_const() == Some(0.0) {
                constant(0.0)
            } else {
                let outer = match f {
                    Func::Sin => call(Func::Cos, a.clone()),
                    Func::Cos => neg(call(Func::Sin, a.clone())),
                    Func::Exp => node.clone(),
                    Func::Ln => div(constant(1.0), a.clone()),
                    Func::Sqrt => div(constant(0.5), node.clone()),
                    Func::Abs => call(Func::Sign, a.clone()),
                    Func::Sign => constant(0.0),
                };
                mul(outer, da)
            }
        }
    };
    memo.insert(key, d.clone());
    d
}

fn precedence(node: &Node) -> u8 {
    match node {
        Node::Add(..) | Node::Sub(..) => 1,
        Node::Mul(..) | Node::Div(..) => 2,
        Node::Neg(_) => 3,
        Node::Pow(..) => 4,
        Node::Const(c) if *c < 0.0 => 3,
        _ => 5,
    }
}

struct Paren<'a>(&'a Node, bool);

impl fmt::Display for Paren<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.1 {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = precedence(self);
        match self {
            Node::Const(c) => write!(f, "{c:?}"),
            Node::Var(Var::X(i)) => write!(f, "x{}", i + 1),
            Node::Var(Var::Xi(i)) => write!(f, "xi{}", i + 1),
            Node::Var(Var::T) => write!(f, "t"),
            Node::NormXi => write!(f, "norm_xi"),
            Node::JnormXi => write!(f, "jnorm_xi"),
            Node::Neg(a) => write!(f, "-{}", Paren(a, precedence(a) <= p)),
            Node::Add(a, b) => write!(f, "{} + {}", a, Paren(b, precedence(b) <= 1)),
            Node::Sub(a, b) => write!(f, "{} - {}", a, Paren(b, precedence(b) <= 1)),
            Node::Mul(a, b) => write!(f, "{}*{}", Paren(a, precedence(a) < 2), Paren(b, precedence(b) <= 2)),
            Node::Div(a, b) => write!(f, "{}/{}", Paren(a, precedence(a) < 2), Paren(b, precedence(b) <= 2)),
            Node::Pow(a, b) => write!(f, "{}^{}", Paren(a, precedence(a) <= 4), Paren(b, precedence(b) < 4)),
            Node::Call(func, a) => write!(f, "{}({})", func.name(), a),
        }
    }
}
