//! Exhaustive Milliken searches.

use std::collections::HashMap;

use num_bigint::BigUint;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::search::{Meter, SearchConfig};

use super::enumerate::{collect_within, count_strong, enumerate_strong};
use super::witness::{Shape, VectorStrongWitness};

/// A coloring of strong subtrees of a fixed host.
pub type Coloring<'a> = dyn Fn(&VectorStrongWitness) -> Result<u32> + Sync + 'a;

fn check_heights(shape: &Shape, k: usize, m: usize) -> Result<()> {
    if k == 0 || k > m || m > shape.height {
        return Err(Error::pre(format!(
            "need 1 ≤ k ≤ m ≤ height, got k={k}, m={m}, height={}",
            shape.height
        )));
    }
    Ok(())
}

fn monochromatic(
    shape: &Shape,
    coloring: &Coloring<'_>,
    cand: &VectorStrongWitness,
    k: usize,
    root: Option<usize>,
) -> Result<bool> {
    let own = cand.shape(shape);
    let mut first = None;
    for inner in enumerate_strong(&own, k, root)? {
        let c = coloring(&cand.compose(&inner))?;
        if *first.get_or_insert(c) != c {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The first height-`m` subtree (in enumeration order) all of whose height-`k`
/// subtrees get one color. With `root = Some(ℓ)` both the candidates and their
/// subtrees are required to agree with the host up to level `ℓ`.
pub fn milliken_search(
    shape: &Shape,
    coloring: &Coloring<'_>,
    k: usize,
    m: usize,
    root: Option<usize>,
    cfg: &SearchConfig,
) -> Result<Option<VectorStrongWitness>> {
    check_heights(shape, k, m)?;
    let candidates = count_strong(shape, m, root)?;
    let per = count_strong(&Shape::new(shape.branching.clone(), m), k, root)?;
    let cost = &candidates * &per;
    if cost > BigUint::from(cfg.budget) {
        return Err(Error::budget("Milliken search", cfg.budget, cost));
    }
    let cands = collect_within(enumerate_strong(shape, m, root)?, cfg.budget, "Milliken search")?;
    if cfg.workers <= 1 {
        for c in cands {
            if monochromatic(shape, coloring, &c, k, root)? {
                return Ok(Some(c));
            }
        }
        return Ok(None);
    }
    cfg.install(|| {
        let hit = cands
            .par_iter()
            .map(|c| monochromatic(shape, coloring, c, k, root).map(|ok| ok.then(|| c.clone())))
            .find_map_first(|r| match r {
                Ok(None) => None,
                other => Some(other),
            });
        match hit {
            Some(r) => r,
            None => Ok(None),
        }
    })
}

/// Outcome of a Milliken-number search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MillikenNumber {
    Value(usize),
    ExceedsMaxHeight(usize),
}

struct Instance {
    /// For each height-`m` subtree, the indices of its height-`k` subtrees.
    blocks_by_last: Vec<Vec<Vec<usize>>>,
    size: usize,
}

fn instance(shape: &Shape, k: usize, m: usize, budget: u64) -> Result<Instance> {
    let xs = collect_within(enumerate_strong(shape, k, None)?, budget, "Milliken number")?;
    let index: HashMap<&VectorStrongWitness, usize> = xs.iter().enumerate().map(|(i, w)| (w, i)).collect();
    let own = Shape::new(shape.branching.clone(), m);
    let inner = collect_within(enumerate_strong(&own, k, None)?, budget, "Milliken number")?;
    let mut blocks_by_last = vec![Vec::new(); xs.len()];
    let mut seen = 0u64;
    for y in enumerate_strong(shape, m, None)? {
        seen += 1;
        if seen > budget {
            return Err(Error::budget("Milliken number", budget, "height-m subtree count"));
        }
        let mut block: Vec<usize> = inner.iter().map(|x| index[&y.compose(x)]).collect();
        block.sort_unstable();
        block.dedup();
        let last = *block.last().unwrap();
        blocks_by_last[last].push(block);
    }
    Ok(Instance { blocks_by_last, size: xs.len() })
}

/// Depth-first search for a coloring with no monochromatic block.
/// Colors are introduced in order of first use, which removes color permutations.
fn bad_coloring_exists(inst: &Instance, r: u32, prefix: &[u32], meter: &mut Meter<'_>) -> Result<bool> {
    fn ok_at(inst: &Instance, colors: &[u32], i: usize) -> bool {
        inst.blocks_by_last[i]
            .iter()
            .all(|b| b.iter().any(|&x| colors[x] != colors[b[0]]))
    }
    fn rec(inst: &Instance, r: u32, colors: &mut Vec<u32>, used: u32, meter: &mut Meter<'_>) -> Result<bool> {
        let i = colors.len();
        if i == inst.size {
            return Ok(true);
        }
        for c in 0..r.min(used + 1) {
            meter.tick()?;
            colors.push(c);
            if ok_at(inst, colors, i) && rec(inst, r, colors, used.max(c + 1), meter)? {
                return Ok(true);
            }
            colors.pop();
        }
        Ok(false)
    }
    let mut colors = Vec::with_capacity(inst.size);
    let mut used = 0;
    for (i, &c) in prefix.iter().enumerate() {
        colors.push(c);
        used = used.max(c + 1);
        if !ok_at(inst, &colors, i) {
            return Ok(false);
        }
    }
    rec(inst, r, &mut colors, used, meter)
}

/// Canonical color prefixes of length `len` (first-use order), lexicographically.
fn prefixes(len: usize, r: u32) -> Vec<Vec<u32>> {
    let mut out = vec![(Vec::new(), 0u32)];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|(p, used)| {
                (0..r.min(used + 1)).map(move |c| {
                    let mut q = p.clone();
                    q.push(c);
                    (q, used.max(c + 1))
                })
            })
            .collect();
    }
    out.into_iter().map(|(p, _)| p).collect()
}

/// The least `M ≤ max_height` such that every `r`-coloring of the height-`k`
/// subtrees of the full tree of height `M` admits a height-`m` subtree whose
/// height-`k` subtrees are monochromatic.
///
/// Full trees suffice: every homogeneous tree of height `M` is canonically
/// isomorphic to one, and the isomorphism preserves strong subtrees. The
/// budget applies to each fixed-order chunk of the coloring search separately.
pub fn milliken_number_bruteforce(
    branching: &[u32],
    m: usize,
    k: usize,
    r: u32,
    max_height: usize,
    cfg: &SearchConfig,
) -> Result<MillikenNumber> {
    if k == 0 || k > m || r < 1 {
        return Err(Error::pre(format!("need m ≥ k ≥ 1 and r ≥ 1, got m={m}, k={k}, r={r}")));
    }
    for height in m..=max_height {
        let shape = Shape::new(branching.to_vec(), height);
        let inst = instance(&shape, k, m, cfg.budget)?;
        let chunks = prefixes(inst.size.min(3), r);
        let run = |p: &Vec<u32>| {
            let mut meter = Meter::new("Milliken coloring search", cfg.budget);
            bad_coloring_exists(&inst, r, p, &mut meter).map_err(|e| match e {
                Error::Budget { what, limit, .. } => Error::Budget {
                    what,
                    limit,
                    estimate: format!("{r}^{} colorings", inst.size),
                },
                e => e,
            })
        };
        let results: Vec<Result<bool>> = if cfg.workers <= 1 {
            let mut v = Vec::new();
            for p in &chunks {
                let res = run(p);
                let stop = !matches!(res, Ok(false));
                v.push(res);
                if stop {
                    break;
                }
            }
            v
        } else {
            cfg.install(|| chunks.par_iter().map(run).collect())
        };
        let mut bad = false;
        for res in results {
            if res? {
                bad = true;
                break;
            }
        }
        if !bad {
            return Ok(MillikenNumber::Value(height));
        }
    }
    Ok(MillikenNumber::ExceedsMaxHeight(max_height))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_pins() {
        let cfg = SearchConfig::default();
        assert_eq!(milliken_number_bruteforce(&[2], 1, 1, 2, 3, &cfg).unwrap(), MillikenNumber::Value(1));
        assert_eq!(milliken_number_bruteforce(&[2], 2, 2, 2, 3, &cfg).unwrap(), MillikenNumber::Value(2));
        assert_eq!(milliken_number_bruteforce(&[3], 3, 3, 4, 3, &cfg).unwrap(), MillikenNumber::Value(3));
    }

    #[test]
    fn single_color_and_equal_heights() {
        let s = Shape::new(vec![2], 3);
        let cfg = SearchConfig::default();
        let one = |_: &VectorStrongWitness| Ok(0);
        let first = enumerate_strong(&s, 2, None).unwrap().next();
        assert_eq!(milliken_search(&s, &one, 1, 2, None, &cfg).unwrap(), first);
        let parity = |w: &VectorStrongWitness| Ok((w.parts[0][0][0] % 2) as u32);
        let first3 = enumerate_strong(&s, 3, None).unwrap().next();
        assert_eq!(milliken_search(&s, &parity, 3, 3, None, &cfg).unwrap(), first3);
    }

    #[test]
    fn parallel_matches_sequential() {
        let s = Shape::new(vec![2], 4);
        let col = |w: &VectorStrongWitness| Ok(((w.levels[0] + w.parts[0][0][0]) % 2) as u32);
        let seq = milliken_search(&s, &col, 1, 2, None, &SearchConfig::default()).unwrap();
        let par = milliken_search(&s, &col, 1, 2, None, &SearchConfig { workers: 4, ..Default::default() }).unwrap();
        assert_eq!(seq, par);
        let a = milliken_number_bruteforce(&[2], 2, 1, 2, 4, &SearchConfig::default()).unwrap();
        let b = milliken_number_bruteforce(&[2], 2, 1, 2, 4, &SearchConfig { workers: 3, ..Default::default() }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn budget_is_enforced() {
        let cfg = SearchConfig::with_budget(5);
        assert!(matches!(
            milliken_number_bruteforce(&[2], 2, 1, 2, 4, &cfg),
            Err(Error::Budget { .. })
        ));
    }
}
