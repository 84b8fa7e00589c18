//! Sources of values for the opaque `UDHL` and `MIL` leaves.

use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{fmt_rat, serde_rat, Rat};

/// A natural-number argument or value: exact, or known only through `log2`.
#[derive(Clone, Debug, PartialEq)]
pub enum Natural {
    Exact(BigUint),
    Log2(f64),
}

impl Natural {
    pub fn exact(&self) -> Option<&BigUint> {
        match self {
            Natural::Exact(n) => Some(n),
            Natural::Log2(_) => None,
        }
    }

    pub fn to_u64(&self) -> Option<u64> {
        self.exact().and_then(|n| u64::try_from(n).ok())
    }
}

impl fmt::Display for Natural {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Natural::Exact(n) => write!(f, "{n}"),
            Natural::Log2(l) => write!(f, "2^{l:.3}"),
        }
    }
}

fn fmt_runs(runs: &[(u32, Natural)]) -> String {
    let parts: Vec<String> = runs
        .iter()
        .map(|(b, t)| match t.to_u64() {
            Some(1) => b.to_string(),
            _ => format!("{b}×{t}"),
        })
        .collect();
    format!("({})", parts.join(","))
}

/// `UDHL(b | k, ε)` with the branching vector in run-length form.
#[derive(Clone, Debug, PartialEq)]
pub struct UdhlQuery {
    pub b: Vec<(u32, Natural)>,
    pub k: Natural,
    pub eps: Rat,
}

/// `MIL(b | m, k, r)` with the branching vector in run-length form.
#[derive(Clone, Debug, PartialEq)]
pub struct MilQuery {
    pub b: Vec<(u32, Natural)>,
    pub m: Natural,
    pub k: Natural,
    pub r: Natural,
}

impl fmt::Display for UdhlQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UDHL({}|{},{})", fmt_runs(&self.b), self.k, fmt_rat(&self.eps))
    }
}

impl fmt::Display for MilQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MIL({}|{},{},{})", fmt_runs(&self.b), self.m, self.k, self.r)
    }
}

const MAX_EXPANDED: u64 = 4096;

/// The explicit branching vector, when it is small enough to list.
pub fn expand_runs(runs: &[(u32, Natural)]) -> Option<Vec<u32>> {
    let mut out = Vec::new();
    for (b, t) in runs {
        let t = t.to_u64()?;
        if out.len() as u64 + t > MAX_EXPANDED {
            return None;
        }
        out.extend(std::iter::repeat_n(*b, t as usize));
    }
    Some(out)
}

pub trait BoundProvider: Sync {
    fn udhl(&self, q: &UdhlQuery) -> Option<Natural>;
    fn mil(&self, q: &MilQuery) -> Option<Natural>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    BruteForced,
    Assumed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UdhlEntry {
    pub b: Vec<u32>,
    pub k: u64,
    #[serde(with = "serde_rat")]
    pub eps: Rat,
    pub value: u64,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MilEntry {
    pub b: Vec<u32>,
    pub m: u64,
    pub k: u64,
    pub r: u64,
    pub value: u64,
    pub provenance: Provenance,
}

/// A finite table of values, each tagged with where it came from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableProvider {
    #[serde(default)]
    pub udhl: Vec<UdhlEntry>,
    #[serde(default)]
    pub mil: Vec<MilEntry>,
}

impl TableProvider {
    pub fn from_json(s: &str) -> Result<Self> {
        let t: TableProvider = serde_json::from_str(s)?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let bad_b = |b: &[u32]| b.is_empty() || b.iter().any(|&x| x < 2);
        for e in &self.udhl {
            if e.value < 1 || bad_b(&e.b) {
                return Err(Error::Parse(format!("invalid UDHL entry {e:?}")));
            }
        }
        for e in &self.mil {
            if e.value < 1 || bad_b(&e.b) {
                return Err(Error::Parse(format!("invalid MIL entry {e:?}")));
            }
        }
        Ok(())
    }
}

impl BoundProvider for TableProvider {
    fn udhl(&self, q: &UdhlQuery) -> Option<Natural> {
        let b = expand_runs(&q.b)?;
        let k = q.k.to_u64()?;
        self.udhl
            .iter()
            .find(|e| e.b == b && e.k == k && e.eps == q.eps)
            .map(|e| Natural::Exact(e.value.into()))
    }

    fn mil(&self, q: &MilQuery) -> Option<Natural> {
        let b = expand_runs(&q.b)?;
        let (m, k, r) = (q.m.to_u64()?, q.k.to_u64()?, q.r.to_u64()?);
        self.mil
            .iter()
            .find(|e| e.b == b && e.m == m && e.k == k && e.r == r)
            .map(|e| Natural::Exact(e.value.into()))
    }
}

/// Answers every query of a kind with one constant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StubProvider {
    pub udhl: Option<u64>,
    pub mil: Option<u64>,
}

impl StubProvider {
    pub fn new(udhl: u64, mil: u64) -> Self {
        StubProvider { udhl: Some(udhl), mil: Some(mil) }
    }
}

impl BoundProvider for StubProvider {
    fn udhl(&self, _: &UdhlQuery) -> Option<Natural> {
        self.udhl.map(|v| Natural::Exact(v.into()))
    }

    fn mil(&self, _: &MilQuery) -> Option<Natural> {
        self.mil.map(|v| Natural::Exact(v.into()))
    }
}

/// Asks each provider in turn.
pub struct Layered<'a>(pub Vec<&'a dyn BoundProvider>);

impl BoundProvider for Layered<'_> {
    fn udhl(&self, q: &UdhlQuery) -> Option<Natural> {
        self.0.iter().find_map(|p| p.udhl(q))
    }

    fn mil(&self, q: &MilQuery) -> Option<Natural> {
        self.0.iter().find_map(|p| p.mil(q))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    #[test]
    fn table_lookup_and_json() {
        let json = r#"{"udhl":[{"b":[2],"k":2,"eps":"1/4","value":5,"provenance":"assumed"}],"mil":[]}"#;
        let t = TableProvider::from_json(json).unwrap();
        let q = UdhlQuery { b: vec![(2, Natural::Exact(1u32.into()))], k: Natural::Exact(2u32.into()), eps: rat(1, 4) };
        assert_eq!(t.udhl(&q), Some(Natural::Exact(5u32.into())));
        assert_eq!(q.to_string(), "UDHL((2)|2,1/4)");
        let other = UdhlQuery { eps: rat(1, 2), ..q };
        assert_eq!(t.udhl(&other), None);
        assert!(TableProvider::from_json(r#"{"udhl":[{"b":[2],"k":2,"eps":"1/4","value":0,"provenance":"assumed"}]}"#).is_err());
    }

    #[test]
    fn runs_expand() {
        let runs = vec![(2, Natural::Exact(2u32.into())), (3, Natural::Exact(1u32.into()))];
        assert_eq!(expand_runs(&runs), Some(vec![2, 2, 3]));
        assert_eq!(expand_runs(&[(2, Natural::Log2(100.0))]), None);
    }

    #[test]
    fn layering() {
        let a = StubProvider { udhl: None, mil: Some(3) };
        let b = StubProvider::new(7, 9);
        let l = Layered(vec![&a, &b]);
        let q = MilQuery {
            b: vec![(2, Natural::Exact(1u32.into()))],
            m: Natural::Exact(1u32.into()),
            k: Natural::Exact(1u32.into()),
            r: Natural::Exact(2u32.into()),
        };
        assert_eq!(l.mil(&q), Some(Natural::Exact(3u32.into())));
    }
}
