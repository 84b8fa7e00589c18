//! Deterministic enumeration and counting of vector strong subtrees.
//!
//! Order: level sets lexicographically; within a level set, the choice of
//! nodes lexicographically by (tree level, coordinate, position). Each witness
//! is produced exactly once because every choice is a distinct offset inside a
//! distinct directed successor cone.

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::tree::upow;

use super::witness::{Shape, VectorStrongWitness};

/// All `k`-element subsets of `allowed` (assumed increasing), lexicographically.
pub fn level_sets_within(allowed: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn rec(allowed: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        let need = k - cur.len();
        for i in start..allowed.len() {
            if allowed.len() - i < need {
                break;
            }
            cur.push(allowed[i]);
            rec(allowed, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k == 0 {
        return out;
    }
    rec(allowed, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Level sets of `Strong_k` (or of `Strong^ℓ_k` when `root` is given).
pub fn level_sets(height: usize, k: usize, root: Option<usize>) -> Vec<Vec<usize>> {
    match root {
        None => level_sets_within(&(0..height).collect::<Vec<_>>(), k),
        Some(l) => {
            if l + 1 > k || k > height {
                return Vec::new();
            }
            let prefix: Vec<usize> = (0..=l).collect();
            if l + 1 == k {
                return vec![prefix];
            }
            level_sets_within(&((l + 1)..height).collect::<Vec<_>>(), k - l - 1)
                .into_iter()
                .map(|tail| prefix.iter().copied().chain(tail).collect())
                .collect()
        }
    }
}

/// Level sets `{l, top}` with `l < top`: height-2 subtrees whose top level is `top`.
pub fn level_sets_top(top: usize) -> Vec<Vec<usize>> {
    (0..top).map(|l| vec![l, top]).collect()
}

#[derive(Clone, Debug)]
struct Slot {
    coord: usize,
    level: usize,
    parent: usize,
    dir: usize,
    radix: usize,
    scale: usize,
}

#[derive(Clone, Debug)]
struct Cursor {
    levels: Vec<usize>,
    slots: Vec<Slot>,
    counters: Vec<usize>,
}

impl Cursor {
    fn new(shape: &Shape, levels: Vec<usize>) -> Self {
        let mut slots = Vec::new();
        for (j, &l) in levels.iter().enumerate() {
            for (c, &b) in shape.branching.iter().enumerate() {
                if j == 0 {
                    slots.push(Slot { coord: c, level: 0, parent: 0, dir: 0, radix: upow(b, l), scale: 0 });
                    continue;
                }
                let gap = upow(b, l - levels[j - 1] - 1);
                for parent in 0..upow(b, j - 1) {
                    for dir in 0..b as usize {
                        slots.push(Slot { coord: c, level: j, parent, dir, radix: gap, scale: gap });
                    }
                }
            }
        }
        let counters = vec![0; slots.len()];
        Cursor { levels, slots, counters }
    }

    fn witness(&self, shape: &Shape) -> VectorStrongWitness {
        let k = self.levels.len();
        let mut parts: Vec<Vec<Vec<usize>>> = shape
            .branching
            .iter()
            .map(|&b| (0..k).map(|j| vec![0; upow(b, j)]).collect())
            .collect();
        for (slot, &x) in self.slots.iter().zip(&self.counters) {
            let b = shape.branching[slot.coord] as usize;
            let pos = if slot.level == 0 {
                x
            } else {
                let above = parts[slot.coord][slot.level - 1][slot.parent];
                (above * b + slot.dir) * slot.scale + x
            };
            parts[slot.coord][slot.level][slot.parent * b + slot.dir] = pos;
        }
        VectorStrongWitness { levels: self.levels.clone(), parts }
    }

    fn advance(&mut self) -> bool {
        for i in (0..self.counters.len()).rev() {
            self.counters[i] += 1;
            if self.counters[i] < self.slots[i].radix {
                return true;
            }
            self.counters[i] = 0;
        }
        false
    }
}

/// A restartable stream of vector strong subtrees of a host shape.
#[derive(Clone, Debug)]
pub struct StrongIter {
    shape: Shape,
    sets: std::vec::IntoIter<Vec<usize>>,
    cursor: Option<Cursor>,
}

impl StrongIter {
    /// Subtrees whose level set is one of `sets`, taken in the given order.
    pub fn with_level_sets(shape: &Shape, sets: Vec<Vec<usize>>) -> Self {
        let mut it = StrongIter { shape: shape.clone(), sets: sets.into_iter(), cursor: None };
        it.next_set();
        it
    }

    fn next_set(&mut self) {
        self.cursor = self.sets.next().map(|l| Cursor::new(&self.shape, l));
    }
}

impl Iterator for StrongIter {
    type Item = VectorStrongWitness;

    fn next(&mut self) -> Option<Self::Item> {
        let cur = self.cursor.as_mut()?;
        let w = cur.witness(&self.shape);
        if !cur.advance() {
            self.next_set();
        }
        Some(w)
    }
}

fn check_k(shape: &Shape, k: usize, root: Option<usize>) -> Result<()> {
    if k == 0 || k > shape.height {
        return Err(Error::Range { what: "subtree height", value: k, limit: shape.height });
    }
    if let Some(l) = root {
        if l + 1 > k {
            return Err(Error::Range { what: "root constraint", value: l, limit: k });
        }
    }
    Ok(())
}

/// `Strong_k(V)`, or `Strong^ℓ_k(V)` (subtrees agreeing with `V` up to level `ℓ`).
pub fn enumerate_strong(shape: &Shape, k: usize, root: Option<usize>) -> Result<StrongIter> {
    check_k(shape, k, root)?;
    Ok(StrongIter::with_level_sets(shape, level_sets(shape.height, k, root)))
}

/// `Strong_2(V, top)`: height-2 subtrees whose second level lies in `⊗V(top)`.
pub fn enumerate_strong2_at(shape: &Shape, top: usize) -> Result<StrongIter> {
    if top == 0 || top >= shape.height {
        return Err(Error::Range { what: "top level", value: top, limit: shape.height });
    }
    Ok(StrongIter::with_level_sets(shape, level_sets_top(top)))
}

/// Number of subtrees with the given level set.
pub fn count_with_levels(shape: &Shape, levels: &[usize]) -> BigUint {
    let mut total = BigUint::one();
    for &b in &shape.branching {
        let bb = BigUint::from(b);
        total *= bb.pow(levels[0] as u32);
        for j in 1..levels.len() {
            let gap = (levels[j] - levels[j - 1] - 1) as u32;
            let slots = upow(b, j) as u32;
            total *= bb.pow(gap * slots);
        }
    }
    total
}

/// `|Strong_k(V)|` (or `|Strong^ℓ_k(V)|`) by summing over level sets.
pub fn count_strong(shape: &Shape, k: usize, root: Option<usize>) -> Result<BigUint> {
    check_k(shape, k, root)?;
    Ok(level_sets(shape.height, k, root)
        .iter()
        .map(|l| count_with_levels(shape, l))
        .sum())
}

/// `q(b⃗, m) = ((∏ b_i^{b_i})^{m+1} − (∏ b_i)^{m+1}) / (∏ b_i^{b_i} − ∏ b_i)`.
pub fn count_strong2_formula(branching: &[u32], m: u64) -> BigUint {
    let (big, small) = strong2_bases(branching);
    let e = (m + 1) as u32;
    (big.pow(e) - small.pow(e)) / (big - small)
}

/// `∏ b_i^{b_i}` and `∏ b_i`.
pub fn strong2_bases(branching: &[u32]) -> (BigUint, BigUint) {
    let mut big = BigUint::one();
    let mut small = BigUint::one();
    for &b in branching {
        big *= BigUint::from(b).pow(b);
        small *= BigUint::from(b);
    }
    (big, small)
}

/// `|Strong_2(V)| = Σ_{m=0}^{h−2} q(b⃗, m)`.
pub fn count_strong2_total(branching: &[u32], height: usize) -> Result<BigUint> {
    if height < 2 {
        return Err(Error::Range { what: "height", value: height, limit: 2 });
    }
    let mut total = BigUint::zero();
    for m in 0..=(height - 2) as u64 {
        total += count_strong2_formula(branching, m);
    }
    Ok(total)
}

/// Collects a stream, failing if it would exceed `budget` items.
pub fn collect_within(it: StrongIter, budget: u64, what: &str) -> Result<Vec<VectorStrongWitness>> {
    let mut out = Vec::new();
    for w in it {
        if out.len() as u64 >= budget {
            return Err(Error::budget(what, budget, format!("more than {budget} witnesses")));
        }
        out.push(w);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn shape(b: &[u32], h: usize) -> Shape {
        Shape::new(b.to_vec(), h)
    }

    #[test]
    fn pinned_counts() {
        assert_eq!(enumerate_strong(&shape(&[2], 2), 2, None).unwrap().count(), 1);
        assert_eq!(enumerate_strong(&shape(&[2], 3), 2, None).unwrap().count(), 7);
        assert_eq!(enumerate_strong(&shape(&[3], 2), 2, None).unwrap().count(), 1);
        assert_eq!(count_strong2_formula(&[2], 0), BigUint::from(1u32));
        assert_eq!(count_strong2_formula(&[2], 1), BigUint::from(6u32));
        assert_eq!(count_strong2_formula(&[2, 2], 0), BigUint::from(1u32));
        assert_eq!(count_strong2_total(&[2], 3).unwrap(), BigUint::from(7u32));
        assert_eq!(count_strong2_total(&[3], 2).unwrap(), BigUint::from(1u32));
        assert!(count_strong2_total(&[2], 1).is_err());
    }

    #[test]
    fn height_one_subtrees_are_points() {
        let s = shape(&[2, 3], 3);
        let n = enumerate_strong(&s, 1, None).unwrap().count();
        assert_eq!(n, 1 + 6 + 36);
    }

    #[test]
    fn stream_matches_level_set_counts_without_duplicates() {
        for b in [vec![2], vec![3], vec![2, 2], vec![2, 3]] {
            for h in 1..=3 {
                for k in 1..=h {
                    let s = shape(&b, h);
                    let all: Vec<_> = enumerate_strong(&s, k, None).unwrap().collect();
                    let distinct: HashSet<_> = all.iter().collect();
                    assert_eq!(distinct.len(), all.len());
                    assert_eq!(BigUint::from(all.len()), count_strong(&s, k, None).unwrap());
                    assert!(all.windows(2).all(|w| w[0].levels <= w[1].levels));
                }
            }
        }
    }

    #[test]
    fn rooted_subtrees_keep_the_initial_levels() {
        let s = shape(&[2], 4);
        for w in enumerate_strong(&s, 3, Some(1)).unwrap() {
            assert_eq!(&w.levels[..2], &[0, 1]);
            assert_eq!(w.parts[0][1], vec![0, 1]);
        }
        assert!(enumerate_strong(&s, 2, Some(2)).is_err());
        assert!(enumerate_strong(&s, 5, None).is_err());
    }

    #[test]
    fn top_level_stream_has_q_elements() {
        for b in [vec![2], vec![3], vec![2, 2]] {
            for m in 0..2u64 {
                let s = shape(&b, m as usize + 2);
                let n = enumerate_strong2_at(&s, m as usize + 1).unwrap().count();
                assert_eq!(BigUint::from(n), count_strong2_formula(&b, m));
            }
        }
    }
}
