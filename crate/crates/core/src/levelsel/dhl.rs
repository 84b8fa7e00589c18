//! Brute-force searches for strong subtrees inside dense subsets of a level
//! product, and the least number of levels forcing one.

use fixedbitset::FixedBitSet;
use num_bigint::BigUint;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{ceil, from_usize, Rat};
use crate::search::{Meter, SearchConfig};
use crate::strong::{level_sets_within, Shape, VectorStrongWitness};
use crate::tree::upow;

struct Slot {
    coord: usize,
    level: usize,
    entry: usize,
}

/// Depth-first choice of nodes for a fixed level set, in the enumeration
/// order of [`crate::strong::enumerate_strong`]. A tuple is tested as soon as
/// its last coordinate is chosen.
struct Dfs<'a> {
    shape: &'a Shape,
    dset: &'a [FixedBitSet],
    levels: &'a [usize],
    slots: Vec<Slot>,
    parts: Vec<Vec<Vec<usize>>>,
    meter: Meter<'a>,
}

impl<'a> Dfs<'a> {
    fn new(shape: &'a Shape, dset: &'a [FixedBitSet], levels: &'a [usize], budget: u64) -> Self {
        let mut slots = Vec::new();
        for j in 0..levels.len() {
            for (c, &b) in shape.branching.iter().enumerate() {
                for entry in 0..upow(b, j) {
                    slots.push(Slot { coord: c, level: j, entry });
                }
            }
        }
        let parts = shape
            .branching
            .iter()
            .map(|&b| (0..levels.len()).map(|j| vec![0; upow(b, j)]).collect())
            .collect();
        Dfs { shape, dset, levels, slots, parts, meter: Meter::new("DHL search", budget) }
    }

    fn candidates(&self, slot: &Slot) -> std::ops::Range<usize> {
        let b = self.shape.branching[slot.coord];
        let l = self.levels[slot.level];
        if slot.level == 0 {
            return 0..upow(b, l);
        }
        let gap = upow(b, l - self.levels[slot.level - 1] - 1);
        let bu = b as usize;
        let above = self.parts[slot.coord][slot.level - 1][slot.entry / bu];
        let base = (above * bu + slot.entry % bu) * gap;
        base..base + gap
    }

    /// Every tuple of level `j` whose last coordinate is `entry`.
    fn tuples_ok(&self, j: usize, entry: usize) -> bool {
        let d = self.shape.dim();
        let l = self.levels[j];
        let sizes: Vec<usize> = (0..d - 1).map(|c| upow(self.shape.branching[c], j)).collect();
        let mut idx = vec![0; d];
        idx[d - 1] = self.parts[d - 1][j][entry];
        let mut counter = vec![0; d - 1];
        loop {
            for c in 0..d - 1 {
                idx[c] = self.parts[c][j][counter[c]];
            }
            if !self.dset[l].contains(self.shape.flatten(l, &idx)) {
                return false;
            }
            let mut c = d - 1;
            loop {
                if c == 0 {
                    return true;
                }
                c -= 1;
                counter[c] += 1;
                if counter[c] < sizes[c] {
                    break;
                }
                counter[c] = 0;
            }
        }
    }

    fn run(&mut self, i: usize) -> Result<bool> {
        if i == self.slots.len() {
            return Ok(true);
        }
        let (coord, level, entry) = (self.slots[i].coord, self.slots[i].level, self.slots[i].entry);
        let last = coord + 1 == self.shape.dim();
        for x in self.candidates(&self.slots[i]) {
            self.meter.tick()?;
            self.parts[coord][level][entry] = x;
            if last && !self.tuples_ok(level, entry) {
                continue;
            }
            if self.run(i + 1)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

fn search_levels(shape: &Shape, dset: &[FixedBitSet], levels: &[usize], budget: u64) -> Result<Option<VectorStrongWitness>> {
    let mut dfs = Dfs::new(shape, dset, levels, budget);
    Ok(dfs.run(0)?.then(|| VectorStrongWitness { levels: levels.to_vec(), parts: dfs.parts }))
}

/// The first height-`k` vector strong subtree (in enumeration order) with
/// level set inside `allowed` and level product inside `dset`, where
/// `dset[n]` holds flat indices of `⊗V(n)`.
///
/// The budget applies to each level set separately, so the result does not
/// depend on the number of workers.
pub fn dhl_search(
    shape: &Shape,
    dset: &[FixedBitSet],
    allowed: &[usize],
    k: usize,
    cfg: &SearchConfig,
) -> Result<Option<VectorStrongWitness>> {
    if k == 0 {
        return Err(Error::pre("subtree height must be at least 1"));
    }
    if dset.len() != shape.height || dset.iter().enumerate().any(|(n, s)| s.len() != shape.level_product_size(n)) {
        return Err(Error::pre("the set must be given on every level of the level product"));
    }
    if allowed.windows(2).any(|p| p[0] >= p[1]) || allowed.last().is_some_and(|&l| l >= shape.height) {
        return Err(Error::pre("allowed levels must be increasing and inside the tree"));
    }
    let sets = level_sets_within(allowed, k);
    if sets.len() as u64 > cfg.budget {
        return Err(Error::budget("DHL search", cfg.budget, sets.len()));
    }
    if cfg.workers <= 1 {
        for levels in &sets {
            if let Some(w) = search_levels(shape, dset, levels, cfg.budget)? {
                return Ok(Some(w));
            }
        }
        return Ok(None);
    }
    cfg.install(|| {
        let hit = sets.par_iter().map(|l| search_levels(shape, dset, l, cfg.budget)).find_map_first(|r| match r {
            Ok(None) => None,
            other => Some(other),
        });
        hit.unwrap_or(Ok(None))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UdhlOutcome {
    Value(usize),
    Exceeds(usize),
}

fn binomial(n: usize, k: usize) -> BigUint {
    let mut out = BigUint::one();
    for i in 0..k {
        out = out * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    out
}

/// Advances a `k`-subset of `0..n` (sorted) to the next one in lexicographic order.
fn next_subset(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Whether every minimal `ε`-dense set on the levels `ls` contains a height-`k` witness.
fn forces(shape: &Shape, ls: &[usize], need: &[usize], k: usize, cfg: &SearchConfig, meter: &mut Meter) -> Result<bool> {
    let mut choice: Vec<Vec<usize>> = need.iter().map(|&c| (0..c).collect()).collect();
    loop {
        meter.tick()?;
        let mut dset: Vec<FixedBitSet> =
            (0..shape.height).map(|n| FixedBitSet::with_capacity(shape.level_product_size(n))).collect();
        for (i, &n) in ls.iter().enumerate() {
            for &x in &choice[i] {
                dset[n].insert(x);
            }
        }
        if dhl_search(shape, &dset, ls, k, cfg)?.is_none() {
            return Ok(false);
        }
        let mut i = ls.len();
        loop {
            if i == 0 {
                return Ok(true);
            }
            i -= 1;
            if next_subset(&mut choice[i], shape.level_product_size(ls[i])) {
                break;
            }
            choice[i] = (0..need[i]).collect();
        }
    }
}

/// The least `N ≤ max_n` such that inside the full tree of height `max_n`
/// with branching `b`, every set meeting each level of an `N`-element level
/// set in at least an `ε` fraction contains the level product of a height-`k`
/// vector strong subtree on those levels. Only sets of exactly `⌈ε·size⌉`
/// tuples per level are tried; supersets inherit their witnesses.
pub fn udhl_bruteforce(b: &[u32], k: usize, eps: &Rat, max_n: usize, cfg: &SearchConfig) -> Result<UdhlOutcome> {
    if b.is_empty() || b.iter().any(|&x| x < 2) {
        return Err(Error::pre("branching numbers must be at least 2"));
    }
    if k == 0 || max_n == 0 {
        return Err(Error::pre("need k ≥ 1 and maxN ≥ 1"));
    }
    if !(eps.is_positive() && *eps <= Rat::one()) {
        return Err(Error::pre(format!("need 0 < ε ≤ 1, got {eps}")));
    }
    let shape = Shape::new(b.to_vec(), max_n);
    let need: Vec<usize> = (0..max_n)
        .map(|n| {
            let c = ceil(&(eps * from_usize(shape.level_product_size(n))));
            usize::try_from(c).expect("bounded by the level size")
        })
        .collect();
    let levels: Vec<usize> = (0..max_n).collect();
    let mut cost = BigUint::zero();
    for n in k..=max_n {
        for ls in level_sets_within(&levels, n) {
            cost += ls.iter().map(|&l| binomial(shape.level_product_size(l), need[l])).product::<BigUint>();
        }
    }
    if cost > BigUint::from(cfg.budget) {
        return Err(Error::budget("UDHL brute force", cfg.budget, cost));
    }
    let mut meter = Meter::new("UDHL brute force", cfg.budget);
    let single = SearchConfig { workers: 1, ..*cfg };
    for n in k..=max_n {
        let mut all = true;
        for ls in level_sets_within(&levels, n) {
            let want: Vec<usize> = ls.iter().map(|&l| need[l]).collect();
            if !forces(&shape, &ls, &want, k, &single, &mut meter)? {
                all = false;
                break;
            }
        }
        if all {
            return Ok(UdhlOutcome::Value(n));
        }
    }
    Ok(UdhlOutcome::Exceeds(max_n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;
    use crate::strong::enumerate_strong;

    fn full_sets(shape: &Shape) -> Vec<FixedBitSet> {
        (0..shape.height)
            .map(|n| {
                let mut s = FixedBitSet::with_capacity(shape.level_product_size(n));
                s.insert_range(..);
                s
            })
            .collect()
    }

    #[test]
    fn full_set_gives_first_enumerated() {
        let shape = Shape::new(vec![2, 3], 3);
        let all: Vec<usize> = (0..3).collect();
        let cfg = SearchConfig::default();
        for k in 1..=3 {
            let first = enumerate_strong(&shape, k, None).unwrap().next().unwrap();
            assert_eq!(dhl_search(&shape, &full_sets(&shape), &all, k, &cfg).unwrap(), Some(first));
        }
    }

    #[test]
    fn empty_set_gives_none() {
        let shape = Shape::new(vec![2], 3);
        let empty: Vec<FixedBitSet> =
            (0..3).map(|n| FixedBitSet::with_capacity(shape.level_product_size(n))).collect();
        assert_eq!(dhl_search(&shape, &empty, &[0, 1, 2], 1, &SearchConfig::default()).unwrap(), None);
    }

    #[test]
    fn found_witness_lies_inside() {
        let shape = Shape::new(vec![2], 4);
        let mut sets = full_sets(&shape);
        sets[1].set(0, false);
        sets[2].set(1, false);
        sets[3].set(7, false);
        let w = dhl_search(&shape, &sets, &[0, 1, 2, 3], 2, &SearchConfig::default()).unwrap().unwrap();
        assert!(w.all_tuples(&shape).iter().all(|&(n, f)| sets[n].contains(f)));
        assert_eq!(w.levels, vec![0, 2]);
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let shape = Shape::new(vec![2, 2], 3);
        let mut sets = full_sets(&shape);
        for f in [0, 3, 5, 9, 12] {
            sets[2].set(f, false);
        }
        let one = dhl_search(&shape, &sets, &[0, 1, 2], 2, &SearchConfig::default()).unwrap();
        let four = dhl_search(&shape, &sets, &[0, 1, 2], 2, &SearchConfig { workers: 4, ..SearchConfig::default() }).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn trivial_udhl_values() {
        let cfg = SearchConfig::default();
        assert_eq!(udhl_bruteforce(&[2], 1, &rat(1, 3), 3, &cfg).unwrap(), UdhlOutcome::Value(1));
        assert_eq!(udhl_bruteforce(&[2], 2, &rat(1, 1), 3, &cfg).unwrap(), UdhlOutcome::Value(2));
        assert_eq!(udhl_bruteforce(&[2], 3, &rat(1, 1), 2, &cfg).unwrap(), UdhlOutcome::Exceeds(2));
    }

    #[test]
    fn subsets_enumerate_lexicographically() {
        let mut c = vec![0, 1];
        let mut seen = vec![c.clone()];
        while next_subset(&mut c, 4) {
            seen.push(c.clone());
        }
        assert_eq!(seen.len(), 6);
        assert_eq!(seen.last().unwrap(), &vec![2, 3]);
        assert_eq!(binomial(8, 4), BigUint::from(70u32));
    }
}
