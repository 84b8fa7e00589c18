//! Embedding a finite subset of a level product into a vector strong subtree.
//!
//! Per coordinate, the projected nodes are closed under meets. Every level
//! that carries a closure node joins a common level set `M`. Each coordinate
//! is then grown level by level over `M`: a directed successor cone that holds
//! closure nodes takes their (necessarily unique) ancestor at the new level,
//! and an empty cone takes its lexicographically least node. A meet-closed
//! set has no two nodes whose cones split strictly between consecutive levels
//! of `M`, which is what makes the choice unique.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::search::SearchConfig;
use crate::tree::{upow, TupleNode, VectorTree};

use super::check::is_vector_strong_subtree;
use super::enumerate::{count_with_levels, level_sets_within, StrongIter};
use super::witness::{Shape, VectorStrongWitness};

fn ancestor(b: u32, n: usize, i: usize, k: usize) -> usize {
    i / upow(b, n - k)
}

fn meet(b: u32, x: (usize, usize), y: (usize, usize)) -> (usize, usize) {
    let top = x.0.min(y.0);
    for k in (0..=top).rev() {
        let a = ancestor(b, x.0, x.1, k);
        if a == ancestor(b, y.0, y.1, k) {
            return (k, a);
        }
    }
    unreachable!("positions share the root")
}

fn meet_closure(b: u32, seeds: &BTreeSet<(usize, usize)>) -> BTreeSet<(usize, usize)> {
    let mut closed = seeds.clone();
    loop {
        let items: Vec<_> = closed.iter().copied().collect();
        let mut grew = false;
        for (a, x) in items.iter().enumerate() {
            for y in &items[a + 1..] {
                grew |= closed.insert(meet(b, *x, *y));
            }
        }
        if !grew {
            return closed;
        }
    }
}

fn grow(b: u32, levels: &[usize], closure: &BTreeSet<(usize, usize)>) -> Option<Vec<Vec<usize>>> {
    let &(rl, ri) = closure.iter().min_by_key(|(n, _)| *n)?;
    let mut parts = vec![vec![ancestor(b, rl, ri, levels[0])]];
    for j in 1..levels.len() {
        let (lo, hi) = (levels[j - 1], levels[j]);
        let gap = upow(b, hi - lo - 1);
        let mut next = Vec::with_capacity(parts[j - 1].len() * b as usize);
        for &x in &parts[j - 1] {
            for p in 0..b as usize {
                let cone = x * b as usize + p;
                let hits: BTreeSet<usize> = closure
                    .iter()
                    .filter(|&&(n, i)| n >= hi && ancestor(b, n, i, lo + 1) == cone)
                    .map(|&(n, i)| ancestor(b, n, i, hi))
                    .collect();
                match hits.len() {
                    0 => next.push(cone * gap),
                    1 => next.push(*hits.iter().next().unwrap()),
                    _ => return None,
                }
            }
        }
        parts.push(next);
    }
    Some(parts)
}

fn contains_all(v: &VectorTree, w: &VectorStrongWitness, f: &[(usize, usize)]) -> bool {
    let shape = Shape::of(v);
    let have: BTreeSet<(usize, usize)> = w.all_tuples(&shape).into_iter().collect();
    f.iter().all(|t| have.contains(t))
}

/// A vector strong subtree containing `f` in its level product, of height at
/// most `d(2|f| − 1)`.
pub fn embed_finite_set(v: &VectorTree, f: &[TupleNode]) -> Result<VectorStrongWitness> {
    embed(v, f, None, &SearchConfig::default())
}

/// As [`embed_finite_set`], padded with extra levels to exactly `height`.
pub fn embed_finite_set_with_height(
    v: &VectorTree,
    f: &[TupleNode],
    height: usize,
) -> Result<VectorStrongWitness> {
    embed(v, f, Some(height), &SearchConfig::default())
}

pub(crate) fn embed(
    v: &VectorTree,
    f: &[TupleNode],
    height: Option<usize>,
    cfg: &SearchConfig,
) -> Result<VectorStrongWitness> {
    if f.is_empty() {
        return Err(Error::pre("cannot embed an empty set"));
    }
    let positions: Vec<(usize, usize)> = f
        .iter()
        .map(|t| v.tuple_position(t))
        .collect::<Result<_>>()?;
    let distinct: BTreeSet<_> = positions.iter().copied().collect();
    let bound = v.dim() * (2 * distinct.len() - 1);
    if let Some(h) = height {
        if h > v.height() {
            return Err(Error::InsufficientHeight { stage: "embedding".into(), required: h });
        }
    }

    let closures: Vec<BTreeSet<(usize, usize)>> = (0..v.dim())
        .map(|c| {
            let b = v.tree(c).branching();
            let seeds = distinct.iter().map(|&(n, fl)| (n, v.unflatten(n, fl)[c])).collect();
            meet_closure(b, &seeds)
        })
        .collect();
    let mut levels: BTreeSet<usize> = closures.iter().flatten().map(|&(n, _)| n).collect();
    if let Some(h) = height {
        if levels.len() > h {
            return Err(Error::pre(format!(
                "requested height {h} is below the {} levels the set spans",
                levels.len()
            )));
        }
        let extra: Vec<usize> = (0..v.height()).filter(|n| !levels.contains(n)).collect();
        let missing = h - levels.len();
        levels.extend(extra.into_iter().take(missing));
    }
    let levels: Vec<usize> = levels.into_iter().collect();

    let greedy = closures
        .iter()
        .enumerate()
        .map(|(c, cl)| grow(v.tree(c).branching(), &levels, cl))
        .collect::<Option<Vec<_>>>()
        .map(|parts| VectorStrongWitness { levels: levels.clone(), parts });
    if let Some(w) = greedy {
        if is_vector_strong_subtree(v, &w.node_sets(v))?.is_strong() && contains_all(v, &w, &positions) {
            debug_assert!(height.is_some() || w.height() <= bound);
            return Ok(w);
        }
    }
    exhaustive(v, &positions, levels.len(), cfg)
}

/// Fallback: the first subtree of the given height whose level product holds `f`.
fn exhaustive(
    v: &VectorTree,
    f: &[(usize, usize)],
    k: usize,
    cfg: &SearchConfig,
) -> Result<VectorStrongWitness> {
    let shape = Shape::of(v);
    let needed: BTreeSet<usize> = f.iter().map(|&(n, _)| n).collect();
    let sets: Vec<Vec<usize>> = level_sets_within(&(0..v.height()).collect::<Vec<_>>(), k)
        .into_iter()
        .filter(|l| needed.iter().all(|n| l.contains(n)))
        .collect();
    let cost: num_bigint::BigUint = sets.iter().map(|l| count_with_levels(&shape, l)).sum();
    if cost > cfg.budget.into() {
        return Err(Error::budget("embedding search", cfg.budget, cost));
    }
    StrongIter::with_level_sets(&shape, sets)
        .find(|w| contains_all(v, w, f))
        .ok_or_else(|| Error::InsufficientHeight { stage: "embedding".into(), required: k })
}

/// Exhaustive oracle: does some subtree of height at most `max_height` hold `f`?
pub fn embeddable_by_search(v: &VectorTree, f: &[TupleNode], max_height: usize, cfg: &SearchConfig) -> Result<bool> {
    let positions: Vec<(usize, usize)> = f
        .iter()
        .map(|t| v.tuple_position(t))
        .collect::<Result<_>>()?;
    for k in 1..=max_height.min(v.height()) {
        match exhaustive(v, &positions, k, cfg) {
            Ok(_) => return Ok(true),
            Err(Error::InsufficientHeight { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(false)
}
