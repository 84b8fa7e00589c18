//! Exact finite probability spaces, the correlation search and the Markov-type
//! counting facts.

use std::collections::BTreeMap;

use fixedbitset::FixedBitSet;
use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{ceil, from_usize, mean, pow, serde_rat, Rat};
use crate::search::Meter;

/// Rational-weighted atoms summing to exactly one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteProbSpace {
    #[serde(with = "serde_rat::vec")]
    weights: Vec<Rat>,
}

/// A set of atoms.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Event {
    bits: FixedBitSet,
}

impl Event {
    pub fn from_atoms(atoms: usize, members: &[usize]) -> Result<Self> {
        let mut bits = FixedBitSet::with_capacity(atoms);
        for &a in members {
            if a >= atoms {
                return Err(Error::Range { what: "atom index", value: a, limit: atoms });
            }
            bits.insert(a);
        }
        Ok(Event { bits })
    }

    pub fn full(atoms: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(atoms);
        bits.insert_range(..);
        Event { bits }
    }

    pub fn empty(atoms: usize) -> Self {
        Event { bits: FixedBitSet::with_capacity(atoms) }
    }

    pub fn atoms(&self) -> Vec<usize> {
        self.bits.ones().collect()
    }

    pub fn contains(&self, atom: usize) -> bool {
        self.bits.contains(atom)
    }

    pub fn intersection(&self, other: &Event) -> Event {
        let mut bits = self.bits.clone();
        bits.intersect_with(&other.bits);
        Event { bits }
    }

    pub fn is_subset(&self, other: &Event) -> bool {
        self.bits.is_subset(&other.bits)
    }

    pub fn universe(&self) -> usize {
        self.bits.len()
    }
}

impl Serialize for Event {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.atoms().serialize(s)
    }
}

/// Events keyed by an ordered index set.
#[derive(Clone, Debug, Default)]
pub struct EventFamily<K: Ord> {
    pub events: BTreeMap<K, Event>,
}

impl<K: Ord> EventFamily<K> {
    pub fn get(&self, k: &K) -> Result<&Event> {
        self.events
            .get(k)
            .ok_or_else(|| Error::pre("event family is not defined at a requested index"))
    }
}

impl FiniteProbSpace {
    pub fn new(weights: Vec<Rat>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::pre("a probability space needs at least one atom"));
        }
        if weights.iter().any(Signed::is_negative) {
            return Err(Error::pre("negative atom weight"));
        }
        let total: Rat = weights.iter().sum();
        if !total.is_one() {
            return Err(Error::pre(format!("atom weights sum to {total}, not 1")));
        }
        Ok(FiniteProbSpace { weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::pre("a probability space needs at least one atom"));
        }
        Self::new(vec![Rat::new(BigInt::one(), BigInt::from(n)); n])
    }

    /// The product of independent events with the given marginals: atom `a`
    /// has bit `i` set iff event `i` occurs.
    pub fn independent(marginals: &[Rat]) -> Result<(Self, Vec<Event>)> {
        let k = marginals.len();
        if k > 20 {
            return Err(Error::pre("too many marginals for an explicit product space"));
        }
        if marginals.iter().any(|p| p.is_negative() || *p > Rat::one()) {
            return Err(Error::pre("marginals must lie in [0, 1]"));
        }
        let n = 1usize << k;
        let weights = (0..n)
            .map(|a| {
                marginals
                    .iter()
                    .enumerate()
                    .map(|(i, p)| if a >> i & 1 == 1 { p.clone() } else { Rat::one() - p })
                    .product()
            })
            .collect();
        let events = (0..k)
            .map(|i| Event::from_atoms(n, &(0..n).filter(|a| a >> i & 1 == 1).collect::<Vec<_>>()))
            .collect::<Result<_>>()?;
        Ok((Self::new(weights)?, events))
    }

    pub fn atoms(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Rat] {
        &self.weights
    }

    fn check(&self, e: &Event) -> Result<()> {
        if e.universe() != self.atoms() {
            return Err(Error::pre(format!(
                "event over {} atoms used in a space of {}",
                e.universe(),
                self.atoms()
            )));
        }
        Ok(())
    }

    pub fn measure(&self, e: &Event) -> Rat {
        e.bits.ones().map(|a| &self.weights[a]).sum()
    }

    pub fn measure_intersection(&self, events: &[&Event]) -> Rat {
        match events.split_first() {
            None => Rat::one(),
            Some((first, rest)) => {
                let mut bits = first.bits.clone();
                for e in rest {
                    bits.intersect_with(&e.bits);
                }
                bits.ones().map(|a| &self.weights[a]).sum()
            }
        }
    }
}

/// `Σ(θ, ε, k) = ⌈k(k−1) / (2(ε^k − θ^k))⌉`.
pub fn sigma_bound(theta: &Rat, eps: &Rat, k: u64) -> Result<BigUint> {
    if !(theta.is_positive() && theta < eps && *eps <= Rat::one()) {
        return Err(Error::pre(format!("need 0 < θ < ε ≤ 1, got θ={theta}, ε={eps}")));
    }
    if k < 2 {
        return Err(Error::pre("k must be at least 2"));
    }
    let num = Rat::from_integer(BigInt::from(k * (k - 1)));
    let den = Rat::from_integer(BigInt::from(2)) * (pow(eps, k) - pow(theta, k));
    Ok(ceil(&(num / den)).magnitude().clone())
}

/// How [`correlation_search`] found its answer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CorrelationRoute {
    ConditionalExpectation,
    ExhaustiveScan,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CorrelationWitness {
    /// Zero-based, increasing event indices.
    pub indices: Vec<usize>,
    #[serde(with = "serde_rat")]
    pub measure: Rat,
    pub route: CorrelationRoute,
}

fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut r = BigInt::one();
    for i in 0..k {
        r = r * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    r
}

/// Expected measure of `∩_{S} A` over uniformly random `k`-subsets `S` that
/// contain `chosen` and otherwise draw from the indices `rest..N`.
fn conditional(space: &FiniteProbSpace, events: &[Event], chosen: &[usize], rest: usize, k: usize) -> Rat {
    let need = k - chosen.len();
    let pool = events.len() - rest;
    let total = binomial(pool, need);
    if total.is_zero() {
        return Rat::zero();
    }
    let mut acc = Rat::zero();
    for (a, w) in space.weights.iter().enumerate() {
        if w.is_zero() || !chosen.iter().all(|&i| events[i].contains(a)) {
            continue;
        }
        let hits = events[rest..].iter().filter(|e| e.contains(a)).count();
        acc += w * Rat::from_integer(binomial(hits, need));
    }
    acc / Rat::from_integer(total)
}

/// A set `F` of `k` indices with `μ(∩_{i∈F} A_i) ≥ θ^k`.
///
/// The search fixes indices in increasing order, including index `i` whenever
/// the expected intersection measure over random completions stays at least
/// `θ^k`. The starting expectation is the average over injective index maps,
/// which the counting argument bounds below by `θ^k` once `N ≥ Σ(θ, ε, k)`.
pub fn correlation_search(
    space: &FiniteProbSpace,
    events: &[Event],
    k: usize,
    theta: &Rat,
    eps: &Rat,
    budget: u64,
) -> Result<CorrelationWitness> {
    for e in events {
        space.check(e)?;
    }
    let sigma = sigma_bound(theta, eps, k as u64)?;
    let n = events.len();
    if BigUint::from(n) < sigma || n < k {
        return Err(Error::pre(format!("need N ≥ max(Σ, k) = max({sigma}, {k}), got N = {n}")));
    }
    if let Some(i) = events.iter().position(|e| space.measure(e) < *eps) {
        return Err(Error::pre(format!("event {i} has measure below ε")));
    }
    let target = pow(theta, k as u64);

    let mut chosen = Vec::with_capacity(k);
    for i in 0..n {
        if chosen.len() == k {
            break;
        }
        let forced = n - i == k - chosen.len();
        chosen.push(i);
        let keep = forced || conditional(space, events, &chosen, i + 1, k) >= target;
        if !keep {
            chosen.pop();
        }
    }
    if chosen.len() == k {
        let refs: Vec<&Event> = chosen.iter().map(|&i| &events[i]).collect();
        let m = space.measure_intersection(&refs);
        if m >= target {
            return Ok(CorrelationWitness { indices: chosen, measure: m, route: CorrelationRoute::ConditionalExpectation });
        }
    }

    // Unreachable when the counting argument holds; kept as a checked fallback.
    let mut meter = Meter::new("correlation scan", budget);
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        meter.tick()?;
        let refs: Vec<&Event> = idx.iter().map(|&i| &events[i]).collect();
        let m = space.measure_intersection(&refs);
        if m >= target {
            return Ok(CorrelationWitness { indices: idx, measure: m, route: CorrelationRoute::ExhaustiveScan });
        }
        let mut j = k;
        loop {
            if j == 0 {
                panic!("correlation search found no index set although N ≥ Σ(θ, ε, k): counting argument violated");
            }
            j -= 1;
            if idx[j] < n - k + j {
                idx[j] += 1;
                for t in j + 1..k {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
    }
}

/// The quantities of the counting argument behind [`correlation_search`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountingChain {
    /// `Σ_σ μ(∩ A_{σ(i)})` over all maps `σ: [k] → [N]`.
    pub all_maps: Rat,
    /// The same sum over injective maps.
    pub injective: Rat,
    /// `ε^k N^k`.
    pub jensen_floor: Rat,
    /// `k(k−1)/2 · N^{k−1}`, the bound on non-injective maps.
    pub collision_cap: Rat,
}

impl CountingChain {
    pub fn holds(&self) -> bool {
        self.all_maps >= self.jensen_floor
            && &self.all_maps - &self.injective <= self.collision_cap
            && self.injective >= &self.jensen_floor - &self.collision_cap
    }
}

/// Computes the chain through atom multiplicities `c_ω = #{i : ω ∈ A_i}`:
/// all maps contribute `c_ω^k`, injective ones `c_ω (c_ω − 1) ⋯ (c_ω − k + 1)`.
pub fn counting_chain(space: &FiniteProbSpace, events: &[Event], k: usize, eps: &Rat) -> CountingChain {
    let n = events.len();
    let mut all_maps = Rat::zero();
    let mut injective = Rat::zero();
    for (a, w) in space.weights.iter().enumerate() {
        let c = events.iter().filter(|e| e.contains(a)).count();
        all_maps += w * pow(&from_usize(c), k as u64);
        let falling: BigInt = (0..k).map(|i| BigInt::from(c as i64 - i as i64)).product();
        if c >= k {
            injective += w * Rat::from_integer(falling);
        }
    }
    let nk = pow(&from_usize(n), k as u64);
    CountingChain {
        all_maps,
        injective,
        jensen_floor: pow(eps, k as u64) * nk,
        collision_cap: from_usize(k * (k - 1)) / from_usize(2) * pow(&from_usize(n), k.saturating_sub(1) as u64),
    }
}

fn unit_interval(a: &[Rat]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::pre("empty sequence"));
    }
    if a.iter().any(|x| x.is_negative() || *x > Rat::one()) {
        return Err(Error::pre("values must lie in [0, 1]"));
    }
    Ok(())
}

fn indices_where(a: &[Rat], pred: impl Fn(&Rat) -> bool) -> Vec<usize> {
    a.iter().enumerate().filter(|(_, x)| pred(x)).map(|(i, _)| i).collect()
}

/// `{i : a_i ≥ α − γ}`, which has at least `γN` elements when the mean is at least `α`.
pub fn markov_f1(a: &[Rat], alpha: &Rat, gamma: &Rat) -> Result<Vec<usize>> {
    unit_interval(a)?;
    if !(gamma.is_positive() && gamma < alpha) {
        return Err(Error::pre("need 0 < γ < α"));
    }
    if mean(a) < *alpha {
        return Err(Error::pre("mean is below α"));
    }
    let threshold = alpha - gamma;
    let out = indices_where(a, |x| *x >= threshold);
    assert!(from_usize(out.len()) >= gamma * from_usize(a.len()), "counting fact f1 violated");
    Ok(out)
}

/// `{i : a_i ≥ α − γ}`, of size at least `(1 − γ)N` when additionally few
/// values reach `α + γ²`.
pub fn markov_f2(a: &[Rat], alpha: &Rat, gamma: &Rat) -> Result<Vec<usize>> {
    unit_interval(a)?;
    if !gamma.is_positive() {
        return Err(Error::pre("need γ > 0"));
    }
    if mean(a) < *alpha {
        return Err(Error::pre("mean is below α"));
    }
    let n = from_usize(a.len());
    let cap = alpha + gamma * gamma;
    let high = a.iter().filter(|x| **x >= cap).count();
    if from_usize(high) > pow(gamma, 3) * &n {
        return Err(Error::pre("more than γ³N values reach α + γ²"));
    }
    let threshold = alpha - gamma;
    let out = indices_where(a, |x| *x >= threshold);
    assert!(from_usize(out.len()) >= (Rat::one() - gamma) * n, "counting fact f2 violated");
    Ok(out)
}

/// `{i : a_i ≤ θ/λ}`, of size at least `(1 − λ)N` when the mean is at most `θ`.
pub fn markov_f3(a: &[Rat], theta: &Rat, lambda: &Rat) -> Result<Vec<usize>> {
    if a.is_empty() || a.iter().any(Signed::is_negative) {
        return Err(Error::pre("values must be nonnegative"));
    }
    if !(theta.is_positive() && lambda.is_positive()) {
        return Err(Error::pre("need θ, λ > 0"));
    }
    if mean(a) > *theta {
        return Err(Error::pre("mean exceeds θ"));
    }
    let threshold = theta / lambda;
    let out = indices_where(a, |x| *x <= threshold);
    assert!(
        from_usize(out.len()) >= (Rat::one() - lambda) * from_usize(a.len()),
        "counting fact f3 violated"
    );
    Ok(out)
}
