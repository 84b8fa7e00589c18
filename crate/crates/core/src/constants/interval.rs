//! Rational intervals with outward rounding to a binary grid.
//!
//! A non-point endpoint `x` with `2^k ≤ |x| < 2^{k+1}` is rounded to a
//! multiple of `2^{k+1−bits}`. Rounding is monotone in `x` and the grid at
//! `2·bits` refines the grid at `bits`, so enclosures computed at a higher
//! precision lie inside those computed at a lower one. Operations on two
//! points stay exact.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::rational::{exact_sqrt, pow, Rat};

pub const DEFAULT_BITS: u32 = 256;
pub const MAX_BITS: u32 = 16384;

/// Point results beyond this many bits are rounded like any other value.
const EXACT_BITS_CAP: u64 = 1 << 20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntervalValue {
    lo: Rat,
    hi: Rat,
    bits: u32,
}

/// `⌊log2 x⌋` for `x > 0`.
pub(crate) fn floor_log2(x: &Rat) -> i64 {
    let n = x.numer().magnitude();
    let d = x.denom().magnitude();
    let k = n.bits() as i64 - d.bits() as i64;
    let at_least = if k >= 0 { *n >= d << (k as usize) } else { n << ((-k) as usize) >= *d };
    if at_least {
        k
    } else {
        k - 1
    }
}

fn scale2(x: &Rat, e: i64) -> Rat {
    if e >= 0 {
        x * Rat::from_integer(BigInt::one() << (e as usize))
    } else {
        x / Rat::from_integer(BigInt::one() << ((-e) as usize))
    }
}

fn grid(bits: u32, k: i64) -> i64 {
    bits as i64 - 1 - k
}

fn round_pos(x: &Rat, bits: u32, up: bool) -> Rat {
    let e = grid(bits, floor_log2(x));
    let y = scale2(x, e);
    let m = if up { y.ceil() } else { y.floor() };
    scale2(&m, -e)
}

fn round(x: &Rat, bits: u32, up: bool) -> Rat {
    match x.cmp(&Rat::zero()) {
        Ordering::Equal => Rat::zero(),
        Ordering::Greater => round_pos(x, bits, up),
        Ordering::Less => -round_pos(&-x, bits, !up),
    }
}

fn too_big(x: &Rat) -> bool {
    x.numer().bits() + x.denom().bits() > EXACT_BITS_CAP
}

fn isqrt_floor(m: &BigInt) -> BigInt {
    BigInt::from(m.magnitude().sqrt())
}

/// `⌊√y⌋` or `⌈√y⌉` on the grid, for `y ≥ 0`.
fn sqrt_round(y: &Rat, bits: u32, up: bool) -> Rat {
    if y.is_zero() {
        return Rat::zero();
    }
    let k = floor_log2(y).div_euclid(2);
    let e = grid(bits, k);
    let scaled = scale2(y, 2 * e);
    let m = if up {
        let c = scaled.ceil().to_integer();
        if c.is_zero() {
            BigInt::zero()
        } else {
            isqrt_floor(&(c - 1)) + 1
        }
    } else {
        isqrt_floor(&scaled.floor().to_integer())
    };
    scale2(&Rat::from_integer(m), -e)
}

impl IntervalValue {
    pub fn point(x: Rat, bits: u32) -> Self {
        IntervalValue { lo: x.clone(), hi: x, bits }
    }

    pub fn new(lo: Rat, hi: Rat, bits: u32) -> Result<Self> {
        if lo > hi {
            return Err(Error::pre(format!("interval endpoints out of order: {lo} > {hi}")));
        }
        Ok(IntervalValue { lo, hi, bits })
    }

    fn rounded(lo: Rat, hi: Rat, bits: u32) -> Self {
        IntervalValue { lo: round(&lo, bits, false), hi: round(&hi, bits, true), bits }
    }

    fn combine(&self, other: &Self, lo: Rat, hi: Rat) -> Self {
        let bits = self.bits.max(other.bits);
        if self.is_point() && other.is_point() && !too_big(&lo) {
            IntervalValue { lo, hi, bits }
        } else {
            Self::rounded(lo, hi, bits)
        }
    }

    pub fn lo(&self) -> &Rat {
        &self.lo
    }

    pub fn hi(&self) -> &Rat {
        &self.hi
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn as_point(&self) -> Option<&Rat> {
        self.is_point().then_some(&self.lo)
    }

    pub fn width(&self) -> Rat {
        &self.hi - &self.lo
    }

    pub fn contains(&self, x: &Rat) -> bool {
        self.lo <= *x && *x <= self.hi
    }

    pub fn contains_interval(&self, other: &Self) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn overlaps(&self, other: &Self) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    /// `Some` when the enclosures decide the order.
    pub fn compare(&self, other: &Self) -> Option<Ordering> {
        if self.is_point() && other.is_point() {
            Some(self.lo.cmp(&other.lo))
        } else if self.hi < other.lo {
            Some(Ordering::Less)
        } else if self.lo > other.hi {
            Some(Ordering::Greater)
        } else {
            None
        }
    }

    /// `Some(true)` when certainly `self ≤ other`, `Some(false)` when certainly not.
    pub fn le(&self, other: &Self) -> Option<bool> {
        if self.hi <= other.lo {
            Some(true)
        } else if self.lo > other.hi {
            Some(false)
        } else {
            None
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        self.combine(o, &self.lo + &o.lo, &self.hi + &o.hi)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.combine(o, &self.lo - &o.hi, &self.hi - &o.lo)
    }

    pub fn neg(&self) -> Self {
        IntervalValue { lo: -&self.hi, hi: -&self.lo, bits: self.bits }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let c = [&self.lo * &o.lo, &self.lo * &o.hi, &self.hi * &o.lo, &self.hi * &o.hi];
        let lo = c.iter().min().unwrap().clone();
        let hi = c.iter().max().unwrap().clone();
        self.combine(o, lo, hi)
    }

    pub fn div(&self, o: &Self) -> Result<Self> {
        if o.lo.is_zero() && o.hi.is_zero() {
            return Err(Error::pre("division by zero"));
        }
        if !o.lo.is_positive() && !o.hi.is_negative() {
            return Err(Error::Undecidable { bits: self.bits, what: "divisor sign".into() });
        }
        let inv = if o.is_point() {
            IntervalValue::point(Rat::one() / &o.lo, o.bits)
        } else {
            Self::rounded(Rat::one() / &o.hi, Rat::one() / &o.lo, o.bits)
        };
        Ok(self.mul(&inv))
    }

    pub fn pow(&self, e: u64) -> Self {
        if let Some(p) = self.as_point() {
            let x = pow(p, e);
            if !too_big(&x) {
                return IntervalValue::point(x, self.bits);
            }
        }
        let mut out = IntervalValue::point(Rat::one(), self.bits);
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                out = out.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.square();
            }
        }
        out
    }

    fn square(&self) -> Self {
        if self.lo.is_negative() && self.hi.is_positive() {
            let m = (-&self.lo).max(self.hi.clone());
            Self::rounded(Rat::zero(), &m * &m, self.bits)
        } else {
            self.mul(self)
        }
    }

    pub fn sqrt(&self) -> Result<Self> {
        if self.hi.is_negative() {
            return Err(Error::pre("square root of a negative value"));
        }
        if self.lo.is_negative() {
            return Err(Error::Undecidable { bits: self.bits, what: "square-root argument sign".into() });
        }
        if let Some(p) = self.as_point() {
            if let Some(s) = exact_sqrt(p) {
                return Ok(IntervalValue::point(s, self.bits));
            }
        }
        Ok(IntervalValue {
            lo: sqrt_round(&self.lo, self.bits, false),
            hi: sqrt_round(&self.hi, self.bits, true),
            bits: self.bits,
        })
    }

    /// Requires the ceiling to be determined by the enclosure.
    pub fn ceil(&self) -> Result<Self> {
        let lo = self.lo.ceil();
        let hi = self.hi.ceil();
        if lo != hi {
            return Err(Error::Undecidable { bits: self.bits, what: "ceiling".into() });
        }
        Ok(IntervalValue::point(lo, self.bits))
    }

    pub fn exact_integer(&self) -> Option<BigInt> {
        self.as_point().filter(|p| p.is_integer()).map(|p| p.to_integer())
    }

    pub fn exact_natural(&self) -> Option<BigUint> {
        self.exact_integer().and_then(|n| n.to_biguint())
    }

    pub fn intersect(&self, other: &Self) -> Option<Self> {
        let lo = (&self.lo).max(&other.lo).clone();
        let hi = (&self.hi).min(&other.hi).clone();
        (lo <= hi).then(|| IntervalValue { lo, hi, bits: self.bits.max(other.bits) })
    }
}

/// Scientific notation with `digits` significant digits, truncated toward zero.
pub fn sci(x: &Rat, digits: usize) -> String {
    if x.is_zero() {
        return "0".into();
    }
    let sign = if x.is_negative() { "-" } else { "" };
    let a = x.abs();
    let mut e10 = (floor_log2(&a) as f64 * std::f64::consts::LOG10_2).floor() as i64;
    let ten = Rat::from_integer(BigInt::from(10));
    let p10 = |e: i64| if e >= 0 { pow(&ten, e as u64) } else { Rat::one() / pow(&ten, (-e) as u64) };
    while a >= p10(e10 + 1) {
        e10 += 1;
    }
    while a < p10(e10) {
        e10 -= 1;
    }
    let m = (&a * p10(digits as i64 - 1 - e10)).floor().to_integer().to_string();
    let (head, tail) = m.split_at(1);
    if tail.is_empty() {
        format!("{sign}{head}e{e10}")
    } else {
        format!("{sign}{head}.{tail}e{e10}")
    }
}

impl fmt::Display for IntervalValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_point() {
            write!(f, "{}", crate::rational::fmt_rat(&self.lo))
        } else {
            write!(f, "[{}, {}]", sci(&self.lo, 20), sci(&self.hi, 20))
        }
    }
}

/// Repeats `attempt` at doubling precision from [`DEFAULT_BITS`] up to
/// [`MAX_BITS`] until it stops reporting `Undecidable`.
pub fn with_auto_precision<T>(start: u32, mut attempt: impl FnMut(u32) -> Result<T>) -> Result<T> {
    let mut bits = start.clamp(2, MAX_BITS);
    loop {
        match attempt(bits) {
            Err(Error::Undecidable { what, .. }) if bits < MAX_BITS => {
                let _ = what;
                bits = (bits * 2).min(MAX_BITS);
            }
            Err(Error::Undecidable { what, .. }) => return Err(Error::Undecidable { bits, what }),
            other => return other,
        }
    }
}
