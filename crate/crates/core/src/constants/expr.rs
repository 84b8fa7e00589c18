//! Symbolic parameter expressions.

use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

use crate::rational::{fmt_rat, Rat};

/// `times` consecutive copies of `branching` in a branching vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchRun {
    pub branching: u32,
    pub times: ParamExpr,
}

impl BranchRun {
    pub fn once(branching: u32) -> Self {
        BranchRun { branching, times: ParamExpr::int(1) }
    }
}

/// Expression tree over exact rationals with opaque `UDHL` and `MIL` leaves.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParamExpr {
    Lit(Rat),
    Var(String),
    Add(Box<ParamExpr>, Box<ParamExpr>),
    Sub(Box<ParamExpr>, Box<ParamExpr>),
    Mul(Box<ParamExpr>, Box<ParamExpr>),
    Div(Box<ParamExpr>, Box<ParamExpr>),
    /// The exponent must evaluate to a natural number.
    Pow(Box<ParamExpr>, Box<ParamExpr>),
    Sqrt(Box<ParamExpr>),
    Ceil(Box<ParamExpr>),
    /// `⌈k(k−1) / (2(ε^k − θ^k))⌉`.
    Sigma {
        theta: Box<ParamExpr>,
        eps: Box<ParamExpr>,
        k: Box<ParamExpr>,
    },
    /// `q(b, m) = ((∏ b_i^{b_i})^{m+1} − (∏ b_i)^{m+1}) / (∏ b_i^{b_i} − ∏ b_i)`.
    QTerm { b: Vec<u32>, m: Box<ParamExpr> },
    /// `Σ_{m < count} q(b, m)`, evaluated in closed form.
    QSum { b: Vec<u32>, count: Box<ParamExpr> },
    Udhl {
        b: Vec<BranchRun>,
        k: Box<ParamExpr>,
        eps: Box<ParamExpr>,
    },
    Mil {
        b: Vec<BranchRun>,
        m: Box<ParamExpr>,
        k: Box<ParamExpr>,
        r: Box<ParamExpr>,
    },
    Let {
        name: String,
        value: Box<ParamExpr>,
        body: Box<ParamExpr>,
    },
    /// `body` iterated `count` times as a function of `var`, starting at `start`.
    Iterate {
        var: String,
        body: Box<ParamExpr>,
        count: Box<ParamExpr>,
        start: Box<ParamExpr>,
    },
    /// `zero` when `arg = 0`, otherwise `other`.
    IfZero {
        arg: Box<ParamExpr>,
        zero: Box<ParamExpr>,
        other: Box<ParamExpr>,
    },
}

impl ParamExpr {
    pub fn lit(r: Rat) -> Self {
        ParamExpr::Lit(r)
    }

    pub fn int(n: i64) -> Self {
        ParamExpr::Lit(Rat::from_integer(n.into()))
    }

    pub fn var(name: &str) -> Self {
        ParamExpr::Var(name.into())
    }

    pub fn pow(self, e: ParamExpr) -> Self {
        ParamExpr::Pow(Box::new(self), Box::new(e))
    }

    pub fn powi(self, e: i64) -> Self {
        self.pow(ParamExpr::int(e))
    }

    pub fn sqrt(self) -> Self {
        ParamExpr::Sqrt(Box::new(self))
    }

    pub fn ceil(self) -> Self {
        ParamExpr::Ceil(Box::new(self))
    }

    pub fn sigma(theta: ParamExpr, eps: ParamExpr, k: ParamExpr) -> Self {
        ParamExpr::Sigma { theta: Box::new(theta), eps: Box::new(eps), k: Box::new(k) }
    }

    pub fn udhl(b: Vec<BranchRun>, k: ParamExpr, eps: ParamExpr) -> Self {
        ParamExpr::Udhl { b, k: Box::new(k), eps: Box::new(eps) }
    }

    pub fn mil(b: Vec<BranchRun>, m: ParamExpr, k: ParamExpr, r: ParamExpr) -> Self {
        ParamExpr::Mil { b, m: Box::new(m), k: Box::new(k), r: Box::new(r) }
    }

    pub fn let_in(name: &str, value: ParamExpr, body: ParamExpr) -> Self {
        ParamExpr::Let { name: name.into(), value: Box::new(value), body: Box::new(body) }
    }

    pub fn iterate(var: &str, body: ParamExpr, count: ParamExpr, start: ParamExpr) -> Self {
        ParamExpr::Iterate { var: var.into(), body: Box::new(body), count: Box::new(count), start: Box::new(start) }
    }

    pub fn if_zero(arg: ParamExpr, zero: ParamExpr, other: ParamExpr) -> Self {
        ParamExpr::IfZero { arg: Box::new(arg), zero: Box::new(zero), other: Box::new(other) }
    }

    /// Number of nodes, counting shared subexpressions once per occurrence.
    pub fn size(&self) -> usize {
        use ParamExpr::*;
        1 + match self {
            Lit(_) | Var(_) => 0,
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => a.size() + b.size(),
            Sqrt(a) | Ceil(a) | QTerm { m: a, .. } | QSum { count: a, .. } => a.size(),
            Sigma { theta, eps, k } => theta.size() + eps.size() + k.size(),
            Udhl { b, k, eps } => runs_size(b) + k.size() + eps.size(),
            Mil { b, m, k, r } => runs_size(b) + m.size() + k.size() + r.size(),
            Let { value, body, .. } => value.size() + body.size(),
            Iterate { body, count, start, .. } => body.size() + count.size() + start.size(),
            IfZero { arg, zero, other } => arg.size() + zero.size() + other.size(),
        }
    }
}

fn runs_size(b: &[BranchRun]) -> usize {
    b.iter().map(|r| r.times.size()).sum()
}

macro_rules! binop {
    ($tr:ident, $f:ident, $v:ident) => {
        impl $tr for ParamExpr {
            type Output = ParamExpr;
            fn $f(self, rhs: ParamExpr) -> ParamExpr {
                ParamExpr::$v(Box::new(self), Box::new(rhs))
            }
        }
    };
}
binop!(Add, add, Add);
binop!(Sub, sub, Sub);
binop!(Mul, mul, Mul);
binop!(Div, div, Div);

fn fmt_runs(f: &mut fmt::Formatter<'_>, b: &[BranchRun]) -> fmt::Result {
    write!(f, "(")?;
    for (i, r) in b.iter().enumerate() {
        if i > 0 {
            write!(f, ",")?;
        }
        match &r.times {
            ParamExpr::Lit(x) if *x == Rat::from_integer(1.into()) => write!(f, "{}", r.branching)?,
            t => write!(f, "{}×[{}]", r.branching, t)?,
        }
    }
    write!(f, ")")
}

impl fmt::Display for ParamExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ParamExpr::*;
        match self {
            Lit(r) => write!(f, "{}", fmt_rat(r)),
            Var(v) => write!(f, "{v}"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} − {b})"),
            Mul(a, b) => write!(f, "({a} · {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, b) => write!(f, "{a}^{b}"),
            Sqrt(a) => write!(f, "√{a}"),
            Ceil(a) => write!(f, "⌈{a}⌉"),
            Sigma { theta, eps, k } => write!(f, "Σ({theta}, {eps}, {k})"),
            QTerm { b, m } => write!(f, "q({b:?}, {m})"),
            QSum { b, count } => write!(f, "Σ_{{m<{count}}} q({b:?}, m)"),
            Udhl { b, k, eps } => {
                write!(f, "UDHL(")?;
                fmt_runs(f, b)?;
                write!(f, "|{k}, {eps})")
            }
            Mil { b, m, k, r } => {
                write!(f, "MIL(")?;
                fmt_runs(f, b)?;
                write!(f, "|{m}, {k}, {r})")
            }
            Let { name, value, body } => write!(f, "(let {name} = {value} in {body})"),
            Iterate { var, body, count, start } => write!(f, "({var} ↦ {body})^({count})({start})"),
            IfZero { arg, zero, other } => write!(f, "(if {arg} = 0 then {zero} else {other})"),
        }
    }
}
