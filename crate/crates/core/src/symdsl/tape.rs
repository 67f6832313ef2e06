//! Flattened, deduplicated evaluation tape for symbol expressions.
//!
//! Bracket closures share large subtrees; the tape evaluates every distinct
//! subexpression exactly once.

use std::collections::HashMap;
use std::sync::Arc;

use super::node::{sign, Func, Node, NodeRef, Var};
use super::{EvalError, EvalMode, MAX_DIM, XI_SINGULAR};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Const(f64),
    Var(Var),
    NormXi,
    JnormXi,
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    PowConst(usize, f64),
    Pow(usize, usize),
    Call(Func, usize),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Key {
    Const(u64),
    Var(Var),
    NormXi,
    JnormXi,
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    PowConst(usize, u64),
    Pow(usize, usize),
    Call(Func, usize),
}

#[derive(Clone, Debug)]
pub(crate) struct Tape {
    ops: Vec<Op>,
}

struct Builder {
    ops: Vec<Op>,
    interned: HashMap<Key, usize>,
    by_ptr: HashMap<*const Node, usize>,
}

impl Builder {
    fn push(&mut self, key: Key, op: Op) -> usize {
        if let Some(&slot) = self.interned.get(&key) {
            return slot;
        }
        self.ops.push(op);
        let slot = self.ops.len() - 1;
        self.interned.insert(key, slot);
        slot
    }

    fn visit(&mut self, node: &NodeRef) -> usize {
        let ptr = Arc::as_ptr(node);
        if let Some(&slot) = self.by_ptr.get(&ptr) {
            return slot;
        }
        let slot = match &**node {
            Node::Const(c) => self.push(Key::Const(c.to_bits()), Op::Const(*c)),
            Node::Var(v) => self.push(Key::Var(*v), Op::Var(*v)),
            Node::NormXi => self.push(Key::NormXi, Op::NormXi),
            Node::JnormXi => self.push(Key::JnormXi, Op::JnormXi),
            Node::Neg(a) => {
                let a = self.visit(a);
                self.push(Key::Neg(a), Op::Neg(a))
            }
            Node::Add(a, b) => {
                let (a, b) = (self.visit(a), self.visit(b));
                self.push(Key::Add(a, b), Op::Add(a, b))
            }
            Node::Sub(a, b) => {
                let (a, b) = (self.visit(a), self.visit(b));
                self.push(Key::Sub(a, b), Op::Sub(a, b))
            }
            Node::Mul(a, b) => {
                let (a, b) = (self.visit(a), self.visit(b));
                self.push(Key::Mul(a, b), Op::Mul(a, b))
            }
            Node::Div(a, b) => {
                let (a, b) = (self.visit(a), self.visit(b));
                self.push(Key::Div(a, b), Op::Div(a, b))
            }
            Node::Pow(a, b) => {
                let sa = self.visit(a);
                match b.as_const() {
                    Some(c) => self.push(Key::PowConst(sa, c.to_bits()), Op::PowConst(sa, c)),
                    None => {
                        let sb = self.visit(b);
                        self.push(Key::Pow(sa, sb), Op::Pow(sa, sb))
                    }
                }
            }
            Node::Call(f, a) => {
                let a = self.visit(a);
                self.push(Key::Call(*f, a), Op::Call(*f, a))
            }
        };
        self.by_ptr.insert(ptr, slot);
        slot
    }
}

/// First-order dual number over the 2·MAX_DIM phase-space coordinates
/// (x first, then ξ).
#[derive(Clone, Copy, Debug)]
pub(crate) struct Dual {
    pub v: f64,
    pub g: [f64; 2 * MAX_DIM],
}

impl Dual {
    fn constant(v: f64) -> Self {
        Dual { v, g: [0.0; 2 * MAX_DIM] }
    }

    fn chain(self, v: f64, dv: f64) -> Self {
        let mut g = self.g;
        g.iter_mut().for_each(|gi| *gi *= dv);
        Dual { v, g }
    }

    fn zip(a: Dual, b: Dual, v: f64, da: f64, db: f64) -> Dual {
        let mut g = [0.0; 2 * MAX_DIM];
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = da * a.g[k] + db * b.g[k];
        }
        Dual { v, g }
    }
}

fn reg(v: f64) -> f64 {
    if v.abs() < super::REG_RADIUS {
        (super::REG_EPS + v * v).sqrt()
    } else {
        v.abs()
    }
}

fn check(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

impl Tape {
    pub fn compile(root: &NodeRef) -> Tape {
        let mut b = Builder { ops: Vec::new(), interned: HashMap::new(), by_ptr: HashMap::new() };
        let last = b.visit(root);
        debug_assert_eq!(last, b.ops.len() - 1);
        Tape { ops: b.ops }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn eval(&self, x: &[f64], xi: &[f64], t: f64, mode: EvalMode, buf: &mut Vec<f64>) -> Result<f64, EvalError> {
        buf.clear();
        let norm2: f64 = xi.iter().map(|v| v * v).sum();
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => c,
                Op::Var(Var::X(i)) => x[i],
                Op::Var(Var::Xi(i)) => xi[i],
                Op::Var(Var::T) => t,
                Op::NormXi => match mode {
                    EvalMode::Exact => norm2.sqrt(),
                    EvalMode::Regularized => reg(norm2.sqrt()),
                },
                Op::JnormXi => (1.0 + norm2).sqrt(),
                Op::Neg(a) => -buf[a],
                Op::Add(a, b) => buf[a] + buf[b],
                Op::Sub(a, b) => buf[a] - buf[b],
                Op::Mul(a, b) => buf[a] * buf[b],
                Op::Div(a, b) => {
                    if buf[b] == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    buf[a] / buf[b]
                }
                Op::PowConst(a, c) => powc(buf[a], c)?,
                Op::Pow(a, b) => {
                    if buf[a] < 0.0 {
                        return Err(EvalError::Domain("negative base with variable exponent"));
                    }
                    buf[a].powf(buf[b])
                }
                Op::Call(f, a) => {
                    let u = buf[a];
                    match f {
                        Func::Sin => u.sin(),
                        Func::Cos => u.cos(),
                        Func::Exp => u.exp(),
                        Func::Ln => {
                            if u <= 0.0 {
                                return Err(EvalError::Domain("logarithm of a non-positive value"));
                            }
                            u.ln()
                        }
                        Func::Sqrt => {
                            if u < 0.0 {
                                return Err(EvalError::Domain("square root of a negative value"));
                            }
                            u.sqrt()
                        }
                        Func::Abs => match mode {
                            EvalMode::Exact => u.abs(),
                            EvalMode::Regularized => reg(u),
                        },
                        Func::Sign => sign(u),
                    }
                }
            };
            buf.push(v);
        }
        check(*buf.last().expect("tape is never empty"))
    }

    pub fn eval_dual(&self, x: &[f64], xi: &[f64], t: f64, mode: EvalMode, buf: &mut Vec<Dual>) -> Result<Dual, EvalError> {
        let n = x.len();
        buf.clear();
        let norm2: f64 = xi.iter().map(|v| v * v).sum();
        let norm = norm2.sqrt();
        for op in &self.ops {
            let d = match *op {
                Op::Const(c) => Dual::constant(c),
                Op::Var(Var::X(i)) => {
                    let mut d = Dual::constant(x[i]);
                    d.g[i] = 1.0;
                    d
                }
                Op::Var(Var::Xi(i)) => {
                    let mut d = Dual::constant(xi[i]);
                    d.g[MAX_DIM + i] = 1.0;
                    d
                }
                Op::Var(Var::T) => Dual::constant(t),
                Op::NormXi => {
                    let r = match mode {
                        EvalMode::Exact => {
                            if norm < XI_SINGULAR {
                                return Err(EvalError::Singular);
                            }
                            norm
                        }
                        EvalMode::Regularized => reg(norm),
                    };
                    let mut d = Dual::constant(r);
                    for k in 0..n {
                        d.g[MAX_DIM + k] = xi[k] / r;
                    }
                    d
                }
                Op::JnormXi => {
                    let r = (1.0 + norm2).sqrt();
                    let mut d = Dual::constant(r);
                    for k in 0..n {
                        d.g[MAX_DIM + k] = xi[k] / r;
                    }
                    d
                }
                Op::Neg(a) => buf[a].chain(-buf[a].v, -1.0),
                Op::Add(a, b) => Dual::zip(buf[a], buf[b], buf[a].v + buf[b].v, 1.0, 1.0),
                Op::Sub(a, b) => Dual::zip(buf[a], buf[b], buf[a].v - buf[b].v, 1.0, -1.0),
                Op::Mul(a, b) => {
                    let (u, w) = (buf[a], buf[b]);
                    Dual::zip(u, w, u.v * w.v, w.v, u.v)
                }
                Op::Div(a, b) => {
                    let (u, w) = (buf[a], buf[b]);
                    if w.v == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    let q = u.v / w.v;
                    Dual::zip(u, w, q, 1.0 / w.v, -q / w.v)
                }
                Op::PowConst(a, c) => {
                    let u = buf[a];
                    let v = powc(u.v, c)?;
                    let dv = if c == 0.0 {
                        0.0
                    } else {
                        if u.v == 0.0 && c < 1.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        c * powc(u.v, c - 1.0)?
                    };
                    u.chain(v, dv)
                }
                Op::Pow(a, b) => {
                    let (u, w) = (buf[a], buf[b]);
                    if u.v <= 0.0 {
                        return Err(EvalError::Domain("non-positive base with variable exponent"));
                    }
                    let v = u.v.powf(w.v);
                    Dual::zip(u, w, v, w.v * v / u.v, v * u.v.ln())
                }
                Op::Call(f, a) => {
                    let u = buf[a];
                    match f {
                        Func::Sin => u.chain(u.v.sin(), u.v.cos()),
                        Func::Cos => u.chain(u.v.cos(), -u.v.sin()),
                        Func::Exp => {
                            let e = u.v.exp();
                            u.chain(e, e)
                        }
                        Func::Ln => {
                            if u.v <= 0.0 {
                                return Err(EvalError::Domain("logarithm of a non-positive value"));
                            }
                            u.chain(u.v.ln(), 1.0 / u.v)
                        }
                        Func::Sqrt => {
                            if u.v < 0.0 {
                                return Err(EvalError::Domain("square root of a negative value"));
                            }
                            if u.v == 0.0 {
                                return Err(EvalError::DivisionByZero);
                            }
                            let s = u.v.sqrt();
                            u.chain(s, 0.5 / s)
                        }
                        Func::Abs => match mode {
                            EvalMode::Exact => {
                                if u.v.abs() < XI_SINGULAR {
                                    return Err(EvalError::Singular);
                                }
                                u.chain(u.v.abs(), sign(u.v))
                            }
                            EvalMode::Regularized => {
                                let r = reg(u.v);
                                let dr = if u.v.abs() < super::REG_RADIUS { u.v / r } else { sign(u.v) };
                                u.chain(r, dr)
                            }
                        },
                        Func::Sign => u.chain(sign(u.v), 0.0),
                    }
                }
            };
            buf.push(d);
        }
        let out = *buf.last().expect("tape is never empty");
        check(out.v)?;
        Ok(out)
    }
}

fn powc(u: f64, c: f64) -> Result<f64, EvalError> {
    if c.fract() == 0.0 && c.abs() < 64.0 {
        if u == 0.0 && c < 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        Ok(u.powi(c as i32))
    } else {
        if u < 0.0 {
            return Err(EvalError::Domain("negative base with fractional exponent"));
        }
        if u == 0.0 && c < 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        Ok(u.powf(c))
    }
}
