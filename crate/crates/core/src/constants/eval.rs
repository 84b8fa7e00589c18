//! Evaluation of [`ParamExpr`] in exact, interval and log-magnitude modes.

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::rational::{exact_sqrt, fmt_rat, pow, Rat};

use super::expr::{BranchRun, ParamExpr};
use super::interval::{floor_log2, with_auto_precision, IntervalValue, DEFAULT_BITS};
use super::provider::{BoundProvider, MilQuery, Natural, UdhlQuery};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Interval(u32),
    Log2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalOptions {
    /// Allow `Iterate` nodes outside log2 mode.
    pub iterate_exact: bool,
    /// Most function applications an `Iterate` node may perform.
    pub iteration_cap: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { iterate_exact: false, iteration_cap: 100_000 }
    }
}

/// A real number known exactly or through `log2` of its absolute value.
#[derive(Clone, Debug, PartialEq)]
pub enum Magnitude {
    Exact(Rat),
    Approx { negative: bool, log2: f64 },
}

const MAG_EXACT_BITS: u64 = 1 << 16;
const EXACT_POW_BITS: u64 = 1 << 26;

fn rat_bits(x: &Rat) -> u64 {
    x.numer().bits() + x.denom().bits()
}

/// `log2 |x|` for `x ≠ 0`.
pub(crate) fn log2_abs(x: &Rat) -> f64 {
    let a = x.abs();
    let k = floor_log2(&a);
    let y = if k >= 0 {
        a / Rat::from_integer(BigInt::one() << (k as usize))
    } else {
        a * Rat::from_integer(BigInt::one() << ((-k) as usize))
    };
    let m = (y * Rat::from_integer(BigInt::one() << 52usize)).floor().to_integer();
    k as f64 + (m.to_f64().unwrap_or(f64::MAX) / (1u64 << 52) as f64).log2()
}

impl Magnitude {
    fn approx(&self) -> Option<(bool, f64)> {
        match self {
            Magnitude::Exact(x) if x.is_zero() => None,
            Magnitude::Exact(x) => Some((x.is_negative(), log2_abs(x))),
            Magnitude::Approx { negative, log2 } => Some((*negative, *log2)),
        }
    }

    fn exact_or_approx(x: Rat) -> Self {
        if rat_bits(&x) > MAG_EXACT_BITS {
            Magnitude::Approx { negative: x.is_negative(), log2: log2_abs(&x) }
        } else {
            Magnitude::Exact(x)
        }
    }

    /// `log2 |x|`, or `-∞` for zero.
    pub fn log2(&self) -> f64 {
        self.approx().map_or(f64::NEG_INFINITY, |(_, l)| l)
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Magnitude::Exact(_))
    }
}

impl fmt::Display for Magnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Magnitude::Exact(x) => write!(f, "{}", fmt_rat(x)),
            Magnitude::Approx { negative, log2 } => {
                write!(f, "{}2^{log2:.6}", if *negative { "-" } else { "" })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Exact(Rat),
    Interval(IntervalValue),
    Log2(Magnitude),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Exact(x) => write!(f, "{}", fmt_rat(x)),
            Value::Interval(iv) => write!(f, "{iv}"),
            Value::Log2(m) => write!(f, "{m}"),
        }
    }
}

impl Value {
    pub fn exact(&self) -> Option<&Rat> {
        match self {
            Value::Exact(x) => Some(x),
            Value::Interval(iv) => iv.as_point(),
            Value::Log2(Magnitude::Exact(x)) => Some(x),
            Value::Log2(_) => None,
        }
    }
}

trait Domain {
    type V: Clone;
    fn lit(&self, r: &Rat) -> Self::V;
    fn add(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn sub(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn mul(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn div(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn pow(&self, a: &Self::V, e: &Natural) -> Result<Self::V>;
    fn sqrt(&self, a: &Self::V) -> Result<Self::V>;
    fn ceil(&self, a: &Self::V) -> Result<Self::V>;
    fn natural(&self, a: &Self::V) -> Result<Natural>;
    fn rational(&self, a: &Self::V) -> Result<Rat>;
    fn from_natural(&self, n: &Natural) -> Result<Self::V>;
    fn is_zero(&self, a: &Self::V) -> Result<bool>;
    fn same(&self, a: &Self::V, b: &Self::V) -> bool;
    fn iterates(&self) -> bool;
}

fn natural_of(x: &Rat) -> Result<Natural> {
    if x.is_integer() && !x.is_negative() {
        Ok(Natural::Exact(x.to_integer().magnitude().clone()))
    } else {
        Err(Error::pre(format!("expected a natural number, got {}", fmt_rat(x))))
    }
}

fn exact_exponent(e: &Natural, what: &str) -> Result<u64> {
    e.to_u64().ok_or_else(|| Error::budget(what, u64::MAX, format!("exponent {e}")))
}

struct ExactDomain;

impl Domain for ExactDomain {
    type V = Rat;
    fn lit(&self, r: &Rat) -> Rat {
        r.clone()
    }
    fn add(&self, a: &Rat, b: &Rat) -> Result<Rat> {
        Ok(a + b)
    }
    fn sub(&self, a: &Rat, b: &Rat) -> Result<Rat> {
        Ok(a - b)
    }
    fn mul(&self, a: &Rat, b: &Rat) -> Result<Rat> {
        Ok(a * b)
    }
    fn div(&self, a: &Rat, b: &Rat) -> Result<Rat> {
        if b.is_zero() {
            return Err(Error::pre("division by zero"));
        }
        Ok(a / b)
    }
    fn pow(&self, a: &Rat, e: &Natural) -> Result<Rat> {
        let e = exact_exponent(e, "exact power")?;
        let cost = e.saturating_mul(rat_bits(a));
        if cost > EXACT_POW_BITS && !(a.is_zero() || a.abs().is_one()) {
            return Err(Error::budget("exact power", EXACT_POW_BITS, format!("{cost} bits")));
        }
        Ok(pow(a, e))
    }
    fn sqrt(&self, a: &Rat) -> Result<Rat> {
        exact_sqrt(a).ok_or_else(|| Error::NotExact(format!("√{} is irrational", fmt_rat(a))))
    }
    fn ceil(&self, a: &Rat) -> Result<Rat> {
        Ok(a.ceil())
    }
    fn natural(&self, a: &Rat) -> Result<Natural> {
        natural_of(a)
    }
    fn rational(&self, a: &Rat) -> Result<Rat> {
        Ok(a.clone())
    }
    fn from_natural(&self, n: &Natural) -> Result<Rat> {
        match n {
            Natural::Exact(n) => Ok(Rat::from_integer(BigInt::from(n.clone()))),
            Natural::Log2(_) => Err(Error::NotExact(format!("leaf value {n} is only known by magnitude"))),
        }
    }
    fn is_zero(&self, a: &Rat) -> Result<bool> {
        Ok(a.is_zero())
    }
    fn same(&self, a: &Rat, b: &Rat) -> bool {
        a == b
    }
    fn iterates(&self) -> bool {
        false
    }
}

struct IntervalDomain {
    bits: u32,
}

impl Domain for IntervalDomain {
    type V = IntervalValue;
    fn lit(&self, r: &Rat) -> IntervalValue {
        IntervalValue::point(r.clone(), self.bits)
    }
    fn add(&self, a: &IntervalValue, b: &IntervalValue) -> Result<IntervalValue> {
        Ok(a.add(b))
    }
    fn sub(&self, a: &IntervalValue, b: &IntervalValue) -> Result<IntervalValue> {
        Ok(a.sub(b))
    }
    fn mul(&self, a: &IntervalValue, b: &IntervalValue) -> Result<IntervalValue> {
        Ok(a.mul(b))
    }
    fn div(&self, a: &IntervalValue, b: &IntervalValue) -> Result<IntervalValue> {
        a.div(b)
    }
    fn pow(&self, a: &IntervalValue, e: &Natural) -> Result<IntervalValue> {
        let e = exact_exponent(e, "interval power")?;
        if let Some(p) = a.as_point() {
            let cost = e.saturating_mul(rat_bits(p));
            if cost > EXACT_POW_BITS && !(p.is_zero() || p.abs().is_one()) {
                return Err(Error::budget("interval power", EXACT_POW_BITS, format!("{cost} bits")));
            }
        }
        Ok(a.pow(e))
    }
    fn sqrt(&self, a: &IntervalValue) -> Result<IntervalValue> {
        a.sqrt()
    }
    fn ceil(&self, a: &IntervalValue) -> Result<IntervalValue> {
        a.ceil()
    }
    fn natural(&self, a: &IntervalValue) -> Result<Natural> {
        match a.as_point() {
            Some(p) => natural_of(p),
            None => Err(Error::NotExact(format!("natural-valued subexpression enclosed only as {a}"))),
        }
    }
    fn rational(&self, a: &IntervalValue) -> Result<Rat> {
        a.as_point()
            .cloned()
            .ok_or_else(|| Error::NotExact(format!("rational leaf argument enclosed only as {a}")))
    }
    fn from_natural(&self, n: &Natural) -> Result<IntervalValue> {
        ExactDomain.from_natural(n).map(|x| self.lit(&x))
    }
    fn is_zero(&self, a: &IntervalValue) -> Result<bool> {
        let z = Rat::zero();
        match a.as_point() {
            Some(p) => Ok(p.is_zero()),
            None if a.contains(&z) => Err(Error::Undecidable { bits: self.bits, what: "zero test".into() }),
            None => Ok(false),
        }
    }
    fn same(&self, a: &IntervalValue, b: &IntervalValue) -> bool {
        a.is_point() && a == b
    }
    fn iterates(&self) -> bool {
        false
    }
}

struct Log2Domain;

fn log_overflow(l: f64) -> Result<f64> {
    if l.is_finite() {
        Ok(l)
    } else {
        Err(Error::budget("log2 evaluation", 0, "a magnitude beyond the f64 log2 range"))
    }
}

impl Log2Domain {
    fn both_exact<'a>(a: &'a Magnitude, b: &'a Magnitude) -> Option<(&'a Rat, &'a Rat)> {
        match (a, b) {
            (Magnitude::Exact(x), Magnitude::Exact(y)) => Some((x, y)),
            _ => None,
        }
    }

    fn sum(a: &Magnitude, b: &Magnitude, negate_b: bool) -> Result<Magnitude> {
        if let Some((x, y)) = Self::both_exact(a, b) {
            return Ok(Magnitude::exact_or_approx(if negate_b { x - y } else { x + y }));
        }
        let Some((sa, la)) = a.approx() else {
            return Ok(match b.clone() {
                Magnitude::Approx { negative, log2 } if negate_b => Magnitude::Approx { negative: !negative, log2 },
                other => other,
            });
        };
        let Some((sb, lb)) = b.approx() else {
            return Ok(a.clone());
        };
        let sb = sb ^ negate_b;
        let ((s_hi, l_hi), (s_lo, l_lo)) = if la >= lb { ((sa, la), (sb, lb)) } else { ((sb, lb), (sa, la)) };
        let d = l_hi - l_lo;
        let l = if s_hi == s_lo {
            l_hi + (-d).exp2().ln_1p() / std::f64::consts::LN_2
        } else if d == 0.0 {
            return Err(Error::NotExact("cancellation between equal magnitudes in log2 mode".into()));
        } else {
            l_hi + (-(-d).exp2()).ln_1p() / std::f64::consts::LN_2
        };
        Ok(Magnitude::Approx { negative: s_hi, log2: log_overflow(l)? })
    }
}

impl Domain for Log2Domain {
    type V = Magnitude;
    fn lit(&self, r: &Rat) -> Magnitude {
        Magnitude::Exact(r.clone())
    }
    fn add(&self, a: &Magnitude, b: &Magnitude) -> Result<Magnitude> {
        Self::sum(a, b, false)
    }
    fn sub(&self, a: &Magnitude, b: &Magnitude) -> Result<Magnitude> {
        Self::sum(a, b, true)
    }
    fn mul(&self, a: &Magnitude, b: &Magnitude) -> Result<Magnitude> {
        if let Some((x, y)) = Self::both_exact(a, b) {
            return Ok(Magnitude::exact_or_approx(x * y));
        }
        match (a.approx(), b.approx()) {
            (Some((sa, la)), Some((sb, lb))) => Ok(Magnitude::Approx { negative: sa ^ sb, log2: log_overflow(la + lb)? }),
            _ => Ok(Magnitude::Exact(Rat::zero())),
        }
    }
    fn div(&self, a: &Magnitude, b: &Magnitude) -> Result<Magnitude> {
        if let Some((x, y)) = Self::both_exact(a, b) {
            if y.is_zero() {
                return Err(Error::pre("division by zero"));
            }
            return Ok(Magnitude::exact_or_approx(x / y));
        }
        match (a.approx(), b.approx()) {
            (_, None) => Err(Error::pre("division by zero")),
            (None, _) => Ok(Magnitude::Exact(Rat::zero())),
            (Some((sa, la)), Some((sb, lb))) => Ok(Magnitude::Approx { negative: sa ^ sb, log2: log_overflow(la - lb)? }),
        }
    }
    fn pow(&self, a: &Magnitude, e: &Natural) -> Result<Magnitude> {
        if let (Magnitude::Exact(x), Some(k)) = (a, e.to_u64()) {
            if x.is_zero() || x.abs().is_one() || k.saturating_mul(rat_bits(x)) <= MAG_EXACT_BITS {
                return Ok(Magnitude::Exact(pow(x, k)));
            }
        }
        let Some((s, l)) = a.approx() else {
            return Ok(Magnitude::Exact(if e.exact().is_some_and(Zero::is_zero) { Rat::one() } else { Rat::zero() }));
        };
        let (ef, odd) = match e {
            Natural::Exact(n) => (n.to_f64().unwrap_or(f64::INFINITY), n.bit(0)),
            Natural::Log2(le) => (le.exp2(), false),
        };
        if l == 0.0 {
            return Ok(Magnitude::Approx { negative: s && odd, log2: 0.0 });
        }
        Ok(Magnitude::Approx { negative: s && odd, log2: log_overflow(l * ef)? })
    }
    fn sqrt(&self, a: &Magnitude) -> Result<Magnitude> {
        match a {
            Magnitude::Exact(x) => {
                if x.is_negative() {
                    return Err(Error::pre("square root of a negative value"));
                }
                Ok(match exact_sqrt(x) {
                    Some(s) => Magnitude::Exact(s),
                    None => Magnitude::Approx { negative: false, log2: log2_abs(x) / 2.0 },
                })
            }
            Magnitude::Approx { negative: true, .. } => Err(Error::pre("square root of a negative value")),
            Magnitude::Approx { log2, .. } => Ok(Magnitude::Approx { negative: false, log2: log2 / 2.0 }),
        }
    }
    fn ceil(&self, a: &Magnitude) -> Result<Magnitude> {
        match a {
            Magnitude::Exact(x) => Ok(Magnitude::Exact(x.ceil())),
            Magnitude::Approx { negative, log2 } if *log2 < 53.0 => {
                let v = log2.exp2();
                let c = if *negative { -(v.floor()) } else { v.ceil() };
                Ok(Magnitude::Exact(Rat::from_integer(BigInt::from(c as i64))))
            }
            other => Ok(other.clone()),
        }
    }
    fn natural(&self, a: &Magnitude) -> Result<Natural> {
        match a {
            Magnitude::Exact(x) => natural_of(x),
            Magnitude::Approx { negative: false, log2 } => Ok(Natural::Log2(*log2)),
            Magnitude::Approx { .. } => Err(Error::pre("expected a natural number, got a negative magnitude")),
        }
    }
    fn rational(&self, a: &Magnitude) -> Result<Rat> {
        match a {
            Magnitude::Exact(x) => Ok(x.clone()),
            other => Err(Error::NotExact(format!("rational leaf argument known only as {other}"))),
        }
    }
    fn from_natural(&self, n: &Natural) -> Result<Magnitude> {
        Ok(match n {
            Natural::Exact(n) => Magnitude::Exact(Rat::from_integer(BigInt::from(n.clone()))),
            Natural::Log2(l) => Magnitude::Approx { negative: false, log2: *l },
        })
    }
    fn is_zero(&self, a: &Magnitude) -> Result<bool> {
        Ok(matches!(a, Magnitude::Exact(x) if x.is_zero()))
    }
    fn same(&self, a: &Magnitude, b: &Magnitude) -> bool {
        a == b
    }
    fn iterates(&self) -> bool {
        true
    }
}

/// Marker for "some leaf was missing"; the names live in `Evaluator::missing`.
fn unresolved() -> Error {
    Error::Unresolved(Vec::new())
}

fn join<A, B>(a: Result<A>, b: Result<B>) -> Result<(A, B)> {
    match (a, b) {
        (Err(e), _) if !matches!(e, Error::Unresolved(_)) => Err(e),
        (_, Err(e)) if !matches!(e, Error::Unresolved(_)) => Err(e),
        (Ok(a), Ok(b)) => Ok((a, b)),
        _ => Err(unresolved()),
    }
}

fn join_all<T>(xs: Vec<Result<T>>) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(xs.len());
    let mut missing = false;
    for x in xs {
        match x {
            Ok(v) => out.push(v),
            Err(Error::Unresolved(_)) => missing = true,
            Err(e) => return Err(e),
        }
    }
    if missing {
        Err(unresolved())
    } else {
        Ok(out)
    }
}

fn products(b: &[u32]) -> Result<(Rat, Rat)> {
    if b.is_empty() || b.iter().any(|&x| x < 2) {
        return Err(Error::pre("branching numbers must be at least 2"));
    }
    let mut p = BigUint::one();
    let mut r = BigUint::one();
    for &x in b {
        p *= BigUint::from(x).pow(x);
        r *= BigUint::from(x);
    }
    Ok((Rat::from_integer(p.into()), Rat::from_integer(r.into())))
}

fn succ(n: &Natural) -> Natural {
    match n {
        Natural::Exact(n) => Natural::Exact(n + 1u32),
        Natural::Log2(l) => Natural::Log2(*l),
    }
}

struct Evaluator<'a, D: Domain> {
    d: D,
    provider: &'a dyn BoundProvider,
    opts: EvalOptions,
    missing: BTreeSet<String>,
}

impl<D: Domain> Evaluator<'_, D> {
    fn nat(&mut self, e: &ParamExpr, env: &mut Vec<(String, D::V)>) -> Result<Natural> {
        let v = self.ev(e, env)?;
        self.d.natural(&v)
    }

    fn runs(&mut self, b: &[BranchRun], env: &mut Vec<(String, D::V)>) -> Result<Vec<(u32, Natural)>> {
        let times: Vec<Result<Natural>> = b.iter().map(|r| self.nat(&r.times, env)).collect();
        let times = join_all(times)?;
        Ok(b.iter().map(|r| r.branching).zip(times).collect())
    }

    fn binary(
        &mut self,
        a: &ParamExpr,
        b: &ParamExpr,
        env: &mut Vec<(String, D::V)>,
    ) -> Result<(D::V, D::V)> {
        let x = self.ev(a, env);
        let y = self.ev(b, env);
        join(x, y)
    }

    fn ev(&mut self, e: &ParamExpr, env: &mut Vec<(String, D::V)>) -> Result<D::V> {
        use ParamExpr::*;
        match e {
            Lit(r) => Ok(self.d.lit(r)),
            Var(name) => env
                .iter()
                .rev()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::pre(format!("unbound variable {name}"))),
            Add(a, b) => {
                let (x, y) = self.binary(a, b, env)?;
                self.d.add(&x, &y)
            }
            Sub(a, b) => {
                let (x, y) = self.binary(a, b, env)?;
                self.d.sub(&x, &y)
            }
            Mul(a, b) => {
                let (x, y) = self.binary(a, b, env)?;
                self.d.mul(&x, &y)
            }
            Div(a, b) => {
                let (x, y) = self.binary(a, b, env)?;
                self.d.div(&x, &y)
            }
            Pow(a, b) => {
                let x = self.ev(a, env);
                let k = self.nat(b, env);
                let (x, k) = join(x, k)?;
                self.d.pow(&x, &k)
            }
            Sqrt(a) => {
                let x = self.ev(a, env)?;
                self.d.sqrt(&x)
            }
            Ceil(a) => {
                let x = self.ev(a, env)?;
                self.d.ceil(&x)
            }
            Sigma { theta, eps, k } => {
                let t = self.ev(theta, env).and_then(|v| self.d.rational(&v));
                let s = self.ev(eps, env).and_then(|v| self.d.rational(&v));
                let k = self.nat(k, env);
                let ((t, s), k) = join(join(t, s), k)?;
                if !(t.is_positive() && t < s && s <= Rat::one()) {
                    return Err(Error::pre(format!("Σ needs 0 < θ < ε ≤ 1, got θ={t}, ε={s}")));
                }
                if k.exact().is_some_and(|k| *k < BigUint::from(2u32)) {
                    return Err(Error::pre("Σ needs k ≥ 2"));
                }
                let kv = self.d.from_natural(&k)?;
                let one = self.d.lit(&Rat::one());
                let two = self.d.lit(&Rat::from_integer(2.into()));
                let km1 = self.d.sub(&kv, &one)?;
                let num = self.d.mul(&kv, &km1)?;
                let gap = self.d.sub(&self.d.pow(&self.d.lit(&s), &k)?, &self.d.pow(&self.d.lit(&t), &k)?)?;
                let den = self.d.mul(&two, &gap)?;
                self.d.ceil(&self.d.div(&num, &den)?)
            }
            QTerm { b, m } => {
                let (p, r) = products(b)?;
                let m = self.nat(m, env)?;
                let e = succ(&m);
                let (pv, rv) = (self.d.lit(&p), self.d.lit(&r));
                let num = self.d.sub(&self.d.pow(&pv, &e)?, &self.d.pow(&rv, &e)?)?;
                self.d.div(&num, &self.d.lit(&(&p - &r)))
            }
            QSum { b, count } => {
                let (p, r) = products(b)?;
                let n = self.nat(count, env)?;
                if n.exact().is_some_and(Zero::is_zero) {
                    return Ok(self.d.lit(&Rat::zero()));
                }
                let e = succ(&n);
                let geo = |s: &Self, x: &Rat| -> Result<D::V> {
                    let xv = s.d.lit(x);
                    let top = s.d.sub(&s.d.pow(&xv, &e)?, &xv)?;
                    s.d.div(&top, &s.d.lit(&(x - Rat::one())))
                };
                let diff = self.d.sub(&geo(self, &p)?, &geo(self, &r)?)?;
                self.d.div(&diff, &self.d.lit(&(&p - &r)))
            }
            Udhl { b, k, eps } => {
                let runs = self.runs(b, env);
                let k = self.nat(k, env);
                let eps = self.ev(eps, env).and_then(|v| self.d.rational(&v));
                let ((b, k), eps) = join(join(runs, k), eps)?;
                let q = UdhlQuery { b, k, eps };
                match self.provider.udhl(&q) {
                    Some(v) => self.d.from_natural(&v),
                    None => {
                        self.missing.insert(q.to_string());
                        Err(unresolved())
                    }
                }
            }
            Mil { b, m, k, r } => {
                let runs = self.runs(b, env);
                let m = self.nat(m, env);
                let k = self.nat(k, env);
                let r = self.nat(r, env);
                let ((b, m), (k, r)) = join(join(runs, m), join(k, r))?;
                let q = MilQuery { b, m, k, r };
                match self.provider.mil(&q) {
                    Some(v) => self.d.from_natural(&v),
                    None => {
                        self.missing.insert(q.to_string());
                        Err(unresolved())
                    }
                }
            }
            Let { name, value, body } => {
                let v = self.ev(value, env)?;
                env.push((name.clone(), v));
                let out = self.ev(body, env);
                env.pop();
                out
            }
            Iterate { var, body, count, start } => {
                if !(self.d.iterates() || self.opts.iterate_exact) {
                    return Err(Error::pre(
                        "iterated functions evaluate only in log2 mode unless explicitly allowed",
                    ));
                }
                let count = self.nat(count, env);
                let start = self.ev(start, env);
                let (count, mut x) = join(count, start)?;
                let mut done = BigUint::zero();
                let mut steps = 0u64;
                loop {
                    if let Natural::Exact(c) = &count {
                        if done >= *c {
                            return Ok(x);
                        }
                    }
                    if steps >= self.opts.iteration_cap {
                        return Err(Error::budget("function iteration", self.opts.iteration_cap, format!("{count} steps")));
                    }
                    env.push((var.clone(), x.clone()));
                    let y = self.ev(body, env);
                    env.pop();
                    let y = y?;
                    if self.d.same(&x, &y) {
                        return Ok(x);
                    }
                    x = y;
                    done += 1u32;
                    steps += 1;
                }
            }
            IfZero { arg, zero, other } => {
                let a = self.ev(arg, env)?;
                if self.d.is_zero(&a)? {
                    self.ev(zero, env)
                } else {
                    self.ev(other, env)
                }
            }
        }
    }
}

fn run<D: Domain>(d: D, expr: &ParamExpr, provider: &dyn BoundProvider, opts: EvalOptions) -> Result<D::V> {
    let mut ev = Evaluator { d, provider, opts, missing: BTreeSet::new() };
    let out = ev.ev(expr, &mut Vec::new());
    match out {
        Err(Error::Unresolved(_)) => Err(Error::Unresolved(ev.missing.into_iter().collect())),
        other => other,
    }
}

pub fn evaluate(expr: &ParamExpr, provider: &dyn BoundProvider, mode: Mode) -> Result<Value> {
    evaluate_with(expr, provider, mode, EvalOptions::default())
}

pub fn evaluate_with(expr: &ParamExpr, provider: &dyn BoundProvider, mode: Mode, opts: EvalOptions) -> Result<Value> {
    match mode {
        Mode::Exact => run(ExactDomain, expr, provider, opts).map(Value::Exact),
        Mode::Interval(bits) => run(IntervalDomain { bits }, expr, provider, opts).map(Value::Interval),
        Mode::Log2 => run(Log2Domain, expr, provider, opts).map(Value::Log2),
    }
}

/// An enclosure at `bits`, retried at doubled precision while a step is undecidable.
pub fn enclose(expr: &ParamExpr, provider: &dyn BoundProvider, bits: u32) -> Result<IntervalValue> {
    with_auto_precision(bits, |b| run(IntervalDomain { bits: b }, expr, provider, EvalOptions::default()))
}

/// Decides `a ≤ b`, doubling precision until the enclosures separate.
pub fn certify_le(a: &ParamExpr, b: &ParamExpr, provider: &dyn BoundProvider) -> Result<bool> {
    with_auto_precision(DEFAULT_BITS, |bits| {
        let x = run(IntervalDomain { bits }, a, provider, EvalOptions::default())?;
        let y = run(IntervalDomain { bits }, b, provider, EvalOptions::default())?;
        x.le(&y).ok_or_else(|| Error::Undecidable { bits, what: format!("{a} ≤ {b}") })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::provider::StubProvider;
    use crate::rational::rat;

    fn lit(n: i64, d: i64) -> ParamExpr {
        ParamExpr::lit(rat(n, d))
    }

    #[test]
    fn literals_in_every_mode() {
        let p = StubProvider::default();
        let e = lit(3, 7);
        assert_eq!(evaluate(&e, &p, Mode::Exact).unwrap(), Value::Exact(rat(3, 7)));
        assert_eq!(evaluate(&e, &p, Mode::Interval(64)).unwrap().exact(), Some(&rat(3, 7)));
        assert_eq!(evaluate(&e, &p, Mode::Log2).unwrap().exact(), Some(&rat(3, 7)));
    }

    #[test]
    fn sigma_node() {
        let p = StubProvider::default();
        let e = ParamExpr::sigma(lit(1, 4), lit(1, 2), ParamExpr::int(2));
        assert_eq!(evaluate(&e, &p, Mode::Exact).unwrap(), Value::Exact(rat(6, 1)));
        let bad = ParamExpr::sigma(lit(1, 2), lit(1, 2), ParamExpr::int(2));
        assert!(evaluate(&bad, &p, Mode::Exact).is_err());
    }

    #[test]
    fn exact_mode_rejects_irrational_roots() {
        let p = StubProvider::default();
        assert!(matches!(evaluate(&lit(2, 1).sqrt(), &p, Mode::Exact), Err(Error::NotExact(_))));
        assert_eq!(evaluate(&lit(9, 4).sqrt(), &p, Mode::Exact).unwrap(), Value::Exact(rat(3, 2)));
        let iv = evaluate(&lit(2, 1).sqrt(), &p, Mode::Interval(128)).unwrap();
        assert!(matches!(iv, Value::Interval(ref v) if !v.is_point()));
    }

    #[test]
    fn missing_leaves_are_listed() {
        let p = StubProvider::default();
        let a = ParamExpr::udhl(vec![BranchRun::once(2)], ParamExpr::int(2), lit(1, 4));
        let b = ParamExpr::mil(vec![BranchRun::once(3)], ParamExpr::int(1), ParamExpr::int(1), ParamExpr::int(2));
        match evaluate(&(a + b), &p, Mode::Exact) {
            Err(Error::Unresolved(names)) => {
                assert_eq!(names, vec!["MIL((3)|1,1,2)".to_string(), "UDHL((2)|2,1/4)".to_string()]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_iterations_return_the_start() {
        let p = StubProvider::default();
        let f = ParamExpr::iterate("n", ParamExpr::var("n") * ParamExpr::int(2), ParamExpr::int(0), ParamExpr::int(5));
        assert_eq!(evaluate(&f, &p, Mode::Log2).unwrap().exact(), Some(&rat(5, 1)));
        let g = ParamExpr::iterate("n", ParamExpr::var("n") * ParamExpr::int(2), ParamExpr::int(3), ParamExpr::int(5));
        assert_eq!(evaluate(&g, &p, Mode::Log2).unwrap().exact(), Some(&rat(40, 1)));
        assert!(evaluate(&g, &p, Mode::Exact).is_err());
        let opts = EvalOptions { iterate_exact: true, ..EvalOptions::default() };
        assert_eq!(evaluate_with(&g, &p, Mode::Exact, opts).unwrap(), Value::Exact(rat(40, 1)));
    }

    #[test]
    fn log2_mode_handles_towers() {
        let p = StubProvider::default();
        let tower = ParamExpr::int(3).pow(ParamExpr::int(2).pow(ParamExpr::int(40)));
        let v = evaluate(&tower, &p, Mode::Log2).unwrap();
        let Value::Log2(m) = v else { panic!() };
        let expected = (1u64 << 40) as f64 * 3f64.log2();
        assert!((m.log2() - expected).abs() / expected < 1e-12);
        assert!(evaluate(&tower, &p, Mode::Exact).is_err());
    }

    #[test]
    fn certified_comparison() {
        let p = StubProvider::default();
        assert!(certify_le(&lit(2, 1).sqrt(), &lit(99, 70), &p).unwrap());
        assert!(!certify_le(&lit(2, 1).sqrt(), &lit(1414, 1000), &p).unwrap());
    }
}
