//! Independent oracles for the integration tests.
//!
//! Everything here works on plain node sets and exact rationals and shares no
//! code with the library beyond its data types.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};
use rand::seq::index::sample;
use rand::Rng;
use ramsey_trees::levelsel::LevelSelection;
use ramsey_trees::rational::Rat;
use ramsey_trees::tree::{Node, TupleNode};

pub fn q(n: i64, d: i64) -> Rat {
    Rat::new(n.into(), d.into())
}

pub fn qpow(x: &Rat, e: u64) -> Rat {
    let mut out = Rat::one();
    for _ in 0..e {
        out *= x;
    }
    out
}

pub fn ceil_int(x: &Rat) -> BigInt {
    x.ceil().to_integer()
}

// ---------------------------------------------------------------- trees

/// Levels of the full tree `b^{<h}`, each in lexicographic order.
pub fn full_levels(b: u32, h: usize) -> Vec<Vec<Node>> {
    let mut levels = vec![vec![Node(Vec::new())]];
    for n in 1..h {
        let mut next = Vec::new();
        for s in &levels[n - 1] {
            for p in 0..b {
                let mut d = s.0.clone();
                d.push(p);
                next.push(Node(d));
            }
        }
        levels.push(next);
    }
    levels
}

fn extends(x: &Node, prefix: &[u32]) -> bool {
    x.0.len() >= prefix.len() && x.0[..prefix.len()] == *prefix
}

fn with(s: &Node, p: u32) -> Vec<u32> {
    let mut d = s.0.clone();
    d.push(p);
    d
}

/// The level set of `set` if it is a strong subtree of `b^{<ℕ}`: a unique
/// root, and every node below the top has, for each direction `p`, exactly
/// one node on the next level of the set extending `s⌢p`.
pub fn strong_levels(b: u32, set: &[Node]) -> Option<Vec<usize>> {
    let distinct: BTreeSet<&Node> = set.iter().collect();
    if set.is_empty() || distinct.len() != set.len() || set.iter().any(|x| x.0.iter().any(|&d| d >= b)) {
        return None;
    }
    let mut by_level: BTreeMap<usize, Vec<&Node>> = BTreeMap::new();
    for x in set {
        by_level.entry(x.0.len()).or_default().push(x);
    }
    let levels: Vec<usize> = by_level.keys().copied().collect();
    if by_level[&levels[0]].len() != 1 {
        return None;
    }
    for j in 0..levels.len() - 1 {
        let lower = &by_level[&levels[j]];
        let upper = &by_level[&levels[j + 1]];
        if upper.len() != lower.len() * b as usize {
            return None;
        }
        for s in lower {
            for p in 0..b {
                let prefix = with(s, p);
                if upper.iter().filter(|u| extends(u, &prefix)).count() != 1 {
                    return None;
                }
            }
        }
    }
    Some(levels)
}

/// Node sets per coordinate form a vector strong subtree of the full vector
/// tree with branchings `b`: each coordinate is strong, all on one level set.
pub fn vector_strong_levels(b: &[u32], sets: &[Vec<Node>]) -> Option<Vec<usize>> {
    if sets.len() != b.len() {
        return None;
    }
    let mut out: Option<Vec<usize>> = None;
    for (c, set) in sets.iter().enumerate() {
        let l = strong_levels(b[c], set)?;
        match &out {
            Some(prev) if *prev != l => return None,
            _ => out = Some(l),
        }
    }
    out
}

/// A uniformly seeded strong subtree of height `k` inside the tree whose
/// levels are `levels` (a strong subtree itself), built top-down from the
/// definition.
pub fn random_strong_in(rng: &mut impl Rng, b: u32, levels: &[Vec<Node>], k: usize) -> Vec<Node> {
    let mut chosen: Vec<usize> = sample(rng, levels.len(), k).into_vec();
    chosen.sort_unstable();
    let root = levels[chosen[0]][rng.random_range(0..levels[chosen[0]].len())].clone();
    let mut out = vec![root.clone()];
    let mut current = vec![root];
    for &l in &chosen[1..] {
        let mut next = Vec::new();
        for s in &current {
            for p in 0..b {
                let prefix = with(s, p);
                let cands: Vec<&Node> = levels[l].iter().filter(|u| extends(u, &prefix)).collect();
                next.push(cands[rng.random_range(0..cands.len())].clone());
            }
        }
        out.extend(next.iter().cloned());
        current = next;
    }
    out
}

/// Groups a node set by length, in increasing order of length.
pub fn by_level(set: &[Node]) -> Vec<Vec<Node>> {
    let mut m: BTreeMap<usize, Vec<Node>> = BTreeMap::new();
    for x in set {
        m.entry(x.0.len()).or_default().push(x.clone());
    }
    m.into_values()
        .map(|mut v| {
            v.sort();
            v
        })
        .collect()
}

/// The node of the next level of `levels` extending `s⌢p`.
pub fn successor_in(levels: &[Vec<Node>], j: usize, s: &Node, p: u32) -> Option<Node> {
    let prefix = with(s, p);
    let hits: Vec<&Node> = levels.get(j + 1)?.iter().filter(|u| extends(u, &prefix)).collect();
    (hits.len() == 1).then(|| hits[0].clone())
}

/// Cartesian product of per-coordinate node lists.
pub fn product(parts: &[Vec<Node>]) -> Vec<TupleNode> {
    let mut out = vec![Vec::new()];
    for part in parts {
        let mut next = Vec::with_capacity(out.len() * part.len());
        for prefix in &out {
            for x in part {
                let mut t: Vec<Node> = prefix.clone();
                t.push(x.clone());
                next.push(t);
            }
        }
        out = next;
    }
    out.into_iter().map(TupleNode).collect()
}

/// A vector tree as `[coordinate][own level] → nodes`.
pub type VecLevels = Vec<Vec<Vec<Node>>>;

/// Height-2 vector strong subtrees of `z` whose top lies on own level `top`:
/// pairs `(root tuple, top level product)`.
pub fn strong2_at(b: &[u32], z: &VecLevels, top: usize) -> Vec<(TupleNode, Vec<TupleNode>)> {
    let mut out = Vec::new();
    for j in 0..top {
        let roots = product(&z.iter().map(|c| c[j].clone()).collect::<Vec<_>>());
        for root in roots {
            // Per coordinate, every choice of one node above each `root_c⌢p`.
            let mut per_coord: Vec<Vec<Vec<Node>>> = Vec::new();
            for (c, &bc) in b.iter().enumerate() {
                let mut choices = vec![Vec::new()];
                for p in 0..bc {
                    let prefix = with(&root.0[c], p);
                    let cands: Vec<&Node> = z[c][top].iter().filter(|u| extends(u, &prefix)).collect();
                    let mut next = Vec::new();
                    for ch in &choices {
                        for u in &cands {
                            let mut v: Vec<Node> = ch.clone();
                            v.push((*u).clone());
                            next.push(v);
                        }
                    }
                    choices = next;
                }
                per_coord.push(choices);
            }
            let mut combos: Vec<Vec<Vec<Node>>> = vec![Vec::new()];
            for choices in &per_coord {
                let mut next = Vec::new();
                for prefix in &combos {
                    for ch in choices {
                        let mut v = prefix.clone();
                        v.push(ch.clone());
                        next.push(v);
                    }
                }
                combos = next;
            }
            for tops in combos {
                out.push((root.clone(), product(&tops)));
            }
        }
    }
    out
}

// ---------------------------------------------------------------- intervals

/// A closed interval of rationals.
#[derive(Clone, Debug, PartialEq)]
pub struct Iv {
    pub lo: Rat,
    pub hi: Rat,
}

fn bit_len(n: &BigInt) -> i64 {
    n.magnitude().bits() as i64
}

fn exact_root(x: &BigUint) -> Option<BigUint> {
    let r = x.sqrt();
    (&r * &r == *x).then_some(r)
}

/// `⌊√x · 2^s⌋ / 2^s` with `s` chosen for about `bits` significant bits, and
/// whether the root is exact.
fn sqrt_floor(x: &Rat, bits: u32) -> (Rat, Rat) {
    assert!(!x.is_negative(), "square root of a negative number");
    if x.is_zero() {
        return (Rat::zero(), Rat::zero());
    }
    let (n, d) = (x.numer().magnitude(), x.denom().magnitude());
    if let (Some(a), Some(b)) = (exact_root(n), exact_root(d)) {
        let r = Rat::new(a.into(), b.into());
        return (r.clone(), r);
    }
    let e = bit_len(x.numer()) - bit_len(x.denom());
    let s = (bits as i64 - e / 2 + 2).max(0) as usize;
    let y: BigUint = (n << (2 * s)) / d;
    let r = y.sqrt();
    let scale = BigInt::one() << s;
    let lo = Rat::new(BigInt::from(r.clone()), scale.clone());
    let hi = Rat::new(BigInt::from(r + 1u32), scale);
    (lo, hi)
}

impl Iv {
    pub fn pt(x: Rat) -> Self {
        Iv { lo: x.clone(), hi: x }
    }

    pub fn add(&self, o: &Iv) -> Iv {
        Iv { lo: &self.lo + &o.lo, hi: &self.hi + &o.hi }
    }

    pub fn sub(&self, o: &Iv) -> Iv {
        Iv { lo: &self.lo - &o.hi, hi: &self.hi - &o.lo }
    }

    /// Product of nonnegative intervals.
    pub fn mul(&self, o: &Iv) -> Iv {
        assert!(!self.lo.is_negative() && !o.lo.is_negative());
        Iv { lo: &self.lo * &o.lo, hi: &self.hi * &o.hi }
    }

    /// Quotient of a nonnegative interval by a positive rational.
    pub fn div_rat(&self, x: &Rat) -> Iv {
        assert!(x.is_positive() && !self.lo.is_negative());
        Iv { lo: &self.lo / x, hi: &self.hi / x }
    }

    pub fn pow(&self, e: u64) -> Iv {
        assert!(!self.lo.is_negative());
        Iv { lo: qpow(&self.lo, e), hi: qpow(&self.hi, e) }
    }

    pub fn sqrt(&self, bits: u32) -> Iv {
        Iv { lo: sqrt_floor(&self.lo, bits).0, hi: sqrt_floor(&self.hi, bits).1 }
    }

    pub fn width(&self) -> Rat {
        &self.hi - &self.lo
    }

    pub fn overlaps(&self, lo: &Rat, hi: &Rat) -> bool {
        self.lo <= *hi && *lo <= self.hi
    }

    /// Certainly `self ≤ o`.
    pub fn le(&self, o: &Iv) -> bool {
        self.hi <= o.lo
    }
}

/// `√(x + x²)` as an interval.
pub fn step(x: &Iv, bits: u32) -> Iv {
    x.add(&x.mul(x)).sqrt(bits)
}

/// `γ0, γ1, γ2` for `(α, β, ρ)`.
pub fn gammas(alpha: &Iv, beta: &Rat, rho: &Rat, bits: u32) -> [Iv; 3] {
    let g0 = Iv::pt(beta + rho * rho).sub(alpha).sqrt(bits);
    let g1 = step(&g0, bits);
    let g2 = step(&g1, bits);
    [g0, g1, g2]
}

/// `α − γ0 − γ1 − γ2`.
pub fn spread(alpha: &Iv, beta: &Rat, rho: &Rat, bits: u32) -> Iv {
    let [g0, g1, g2] = gammas(alpha, beta, rho, bits);
    alpha.sub(&g0).sub(&g1).sub(&g2)
}

// ---------------------------------------------------------------- level selections

/// A level selection as a map from index tuples to node sets of `W`, over a
/// full index tree and a full ambient tree.
pub struct NodeSel {
    pub b: Vec<u32>,
    pub b_w: u32,
    pub level_map: Vec<usize>,
    pub d: HashMap<TupleNode, BTreeSet<Node>>,
}

impl NodeSel {
    pub fn of(sel: &LevelSelection) -> Self {
        let j = sel.to_json();
        let amb = &j.ambient;
        let full: usize = (0..amb.level_set.len()).map(|l| (amb.branching as usize).pow(l as u32)).sum();
        assert_eq!(amb.level_set, (0..amb.level_set.len()).collect::<Vec<_>>(), "ambient tree must be full");
        assert_eq!(amb.nodes.len(), full, "ambient tree must be full");
        NodeSel {
            b: j.vector_tree.iter().map(|t| t.branching).collect(),
            b_w: amb.branching,
            level_map: j.level_map.clone(),
            d: j.assignments.into_iter().map(|a| (a.tuple, a.nodes.into_iter().collect())).collect(),
        }
    }

    /// `W`-level of `D(t)`.
    pub fn w_level(&self, t: &TupleNode) -> usize {
        self.level_map[t.0[0].0.len()]
    }

    pub fn get(&self, t: &TupleNode) -> &BTreeSet<Node> {
        self.d.get(t).unwrap_or_else(|| panic!("tuple {t} has no assignment"))
    }

    /// `⋂ D(t)` over `tuples`, all on one index level.
    pub fn common(&self, tuples: &[TupleNode]) -> BTreeSet<Node> {
        let mut it = tuples.iter();
        let mut out = self.get(it.next().expect("nonempty family")).clone();
        for t in it {
            out = out.intersection(self.get(t)).cloned().collect();
        }
        out
    }

    /// `dens(X | w)` for `X ⊆ W(level)`; `None` when `w` lies above `level`.
    pub fn dens(&self, x: &BTreeSet<Node>, level: usize, w: &Node) -> Option<Rat> {
        if w.0.len() > level {
            return None;
        }
        let hits = x.iter().filter(|u| extends(u, &w.0)).count();
        let room = BigInt::from(self.b_w).pow((level - w.0.len()) as u32);
        Some(Rat::new(hits.into(), room))
    }

    pub fn child(&self, w: &Node, p: u32) -> Node {
        Node(with(w, p))
    }
}
