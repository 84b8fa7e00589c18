//! Seeded property suites run by `ramsey-trees verify`.
//!
//! Each suite draws its instances from `seed`, calls the library, and
//! re-checks every answer through the predicate ops.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::averaging::{averaging_dichotomy, verify_dichotomy, DichotomyParams};
use crate::constants::{default_r, gammas, sequence_report};
use crate::error::{Error, Result};
use crate::gen;
use crate::levelsel::{density_increment_run, IncrementParams};
use crate::prob::{correlation_search, sigma_bound, Event};
use crate::rational::{pow, rat};
use crate::search::SearchConfig;
use crate::strong::{
    count_strong2_formula, embed_finite_set, enumerate_strong, enumerate_strong2_at, is_strong_subtree,
    is_vector_strong_subtree, CanonicalIso, Shape, VectorStrongWitness,
};
use crate::tree::{HomTree, Node, TupleNode, VectorTree};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub pass: bool,
    pub checked: usize,
    /// The first failure, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

pub const SUITES: [&str; 8] =
    ["counting", "isomorphism", "embedding", "correlation", "averaging", "dichotomy", "constants", "increment"];

/// Runs the named suites (all when `names` is empty) with `samples` random
/// instances each.
pub fn run_suites(names: &[String], samples: usize, seed: u64, cfg: &SearchConfig) -> Result<Vec<SuiteReport>> {
    if let Some(bad) = names.iter().find(|n| !SUITES.contains(&n.as_str())) {
        return Err(Error::Parse(format!("unknown suite {bad:?}; known: {}", SUITES.join(", "))));
    }
    let wanted = |s: &str| names.is_empty() || names.iter().any(|n| n == s);
    let mut out = Vec::new();
    for (i, name) in SUITES.iter().enumerate() {
        if !wanted(name) {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let result = match *name {
            "counting" => counting(cfg),
            "isomorphism" => isomorphism(&mut rng, samples),
            "embedding" => embedding(&mut rng, samples),
            "correlation" => correlation(&mut rng, samples),
            "averaging" => averaging(&mut rng, samples),
            "dichotomy" => dichotomy(&mut rng, samples),
            "constants" => constants(),
            _ => increment(seed, cfg),
        };
        out.push(match result {
            Ok(checked) => SuiteReport { name, pass: true, checked, detail: None },
            Err(e) => SuiteReport { name, pass: false, checked: 0, detail: Some(e.to_string()) },
        });
    }
    Ok(out)
}

fn fail(msg: impl Into<String>) -> Error {
    Error::Verification(msg.into())
}

fn random_witness(rng: &mut ChaCha8Rng, shape: &Shape, k: usize) -> Result<VectorStrongWitness> {
    let all: Vec<VectorStrongWitness> = enumerate_strong(shape, k, None)?.collect();
    all.choose(rng).cloned().ok_or_else(|| Error::pre("no strong subtree of that height"))
}

/// `|Strong_2(V, m+1)|` by enumeration against the closed form.
fn counting(cfg: &SearchConfig) -> Result<usize> {
    let mut checked = 0;
    for b in [vec![2], vec![3], vec![2, 2], vec![2, 3], vec![3, 3]] {
        for m in 0..2u64 {
            let shape = Shape::new(b.clone(), m as usize + 2);
            let mut n = 0u64;
            for _ in enumerate_strong2_at(&shape, m as usize + 1)? {
                n += 1;
                if n > cfg.budget {
                    return Err(Error::budget("counting suite", cfg.budget, n));
                }
            }
            let want = count_strong2_formula(&b, m);
            if want != n.into() {
                return Err(fail(format!("b={b:?}, m={m}: enumerated {n}, formula {want}")));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

fn random_hom_tree(rng: &mut ChaCha8Rng, b: u32, height: usize) -> Result<HomTree> {
    let host = VectorTree::full(&[b], rng.random_range(height..=height + 1))?;
    let w = random_witness(rng, &Shape::of(&host), height)?;
    HomTree::from_nodes(b, w.node_sets(&host).remove(0))
}

fn isomorphism(rng: &mut ChaCha8Rng, samples: usize) -> Result<usize> {
    for i in 0..samples {
        let b = rng.random_range(2..=3);
        let h = rng.random_range(2..=3);
        let t = random_hom_tree(rng, b, h)?;
        let s = random_hom_tree(rng, b, h)?;
        let iso = CanonicalIso::new(&t, &s)?;
        let mut seen = std::collections::BTreeSet::new();
        for (x, y) in iso.pairs() {
            if t.position(x).map(|p| p.0) != s.position(y).map(|p| p.0) || !seen.insert(y.clone()) {
                return Err(fail(format!("sample {i}: {x} ↦ {y} breaks bijectivity or levels")));
            }
            if iso.inverse(y)? != *x {
                return Err(fail(format!("sample {i}: inverse disagrees at {y}")));
            }
            let lx = t.position(x).expect("node of T").0;
            if lx + 1 < t.height() {
                for p in 0..b {
                    if iso.forward(&t.directed_immsuc(x, p)?)? != s.directed_immsuc(y, p)? {
                        return Err(fail(format!("sample {i}: direction {p} at {x} does not commute")));
                    }
                }
            }
        }
        let full = HomTree::full(b, h)?;
        let k = rng.random_range(1..=h);
        let r_full = random_witness(rng, &Shape::new(vec![b], h), k)?;
        let r = CanonicalIso::new(&full, &t)?.image(&r_full.node_sets(&VectorTree::new(vec![full])?)[0])?;
        let image = iso.image(&r)?;
        if !is_strong_subtree(&t, &r)?.is_strong() || !is_strong_subtree(&s, &image)?.is_strong() {
            return Err(fail(format!("sample {i}: image of a strong subtree is not strong")));
        }
        let levels = |tree: &HomTree, set: &[Node]| {
            let mut l: Vec<usize> = set.iter().map(|x| tree.position(x).expect("node of tree").0).collect();
            l.sort_unstable();
            l.dedup();
            l
        };
        if levels(&t, &r) != levels(&s, &image) {
            return Err(fail(format!("sample {i}: level sets of R and I(R) differ")));
        }
    }
    Ok(samples)
}

fn embedding(rng: &mut ChaCha8Rng, samples: usize) -> Result<usize> {
    for i in 0..samples {
        let d = rng.random_range(1..=2);
        let b: Vec<u32> = (0..d).map(|_| rng.random_range(2..=3)).collect();
        let v = VectorTree::full(&b, if d == 1 { 6 } else { 4 })?;
        let size = rng.random_range(1..=3);
        let f: Vec<TupleNode> = (0..size)
            .map(|_| {
                let n = rng.random_range(0..v.height());
                v.tuple(n, rng.random_range(0..v.level_product_size(n)))
            })
            .collect();
        let w = embed_finite_set(&v, &f)?;
        let sets = w.node_sets(&v);
        if !is_vector_strong_subtree(&v, &sets)?.is_strong() {
            return Err(fail(format!("sample {i}: embedding is not a vector strong subtree")));
        }
        let mut distinct = f.clone();
        distinct.sort();
        distinct.dedup();
        if w.height() > d * (2 * distinct.len() - 1) {
            return Err(fail(format!("sample {i}: height {} above d(2|F|−1)", w.height())));
        }
        if let Some(t) = f.iter().find(|t| t.0.iter().zip(&sets).any(|(x, s)| !s.contains(x))) {
            return Err(fail(format!("sample {i}: {t} is not in the embedding")));
        }
    }
    Ok(samples)
}

fn correlation(rng: &mut ChaCha8Rng, samples: usize) -> Result<usize> {
    let mut checked = 0;
    for i in 0..samples {
        let atoms = rng.random_range(2..=12);
        let k = rng.random_range(2..=3);
        let eps = rat(rng.random_range(1..=3), 4);
        let theta = &eps * rat(rng.random_range(1..=3), 4);
        let n = sigma_bound(&theta, &eps, k as u64)?;
        let n = usize::try_from(n).unwrap_or(usize::MAX).max(k);
        if n > 64 {
            continue;
        }
        let space = gen::prob_space(atoms, 5, rng.random())?;
        let mut events = Vec::with_capacity(n);
        while events.len() < n {
            let members: Vec<usize> = (0..atoms).filter(|_| rng.random_bool(0.7)).collect();
            let e = Event::from_atoms(atoms, &members)?;
            if space.measure(&e) >= eps {
                events.push(e);
            }
        }
        let found = correlation_search(&space, &events, k, &theta, &eps, 1 << 20)?;
        let refs: Vec<&Event> = found.indices.iter().map(|&j| &events[j]).collect();
        if found.indices.len() != k || space.measure_intersection(&refs) < pow(&theta, k as u64) {
            return Err(fail(format!("sample {i}: returned indices miss θ^k")));
        }
        checked += 1;
    }
    Ok(checked)
}

fn averaging(rng: &mut ChaCha8Rng, samples: usize) -> Result<usize> {
    let mut checked = 0;
    for i in 0..samples {
        let cells: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(1..=4)).collect();
        let inst = gen::avg_instance(&cells, rng.random_range(1..=4), 4, rng.random())?;
        let alpha = inst.grand_mean();
        if alpha == rat(0, 1) {
            continue;
        }
        let rho = pow(&(&alpha / rat(4, 1)), 4) / rat(2, 1);
        let p = DichotomyParams::new(alpha.clone(), alpha, rho);
        let w = averaging_dichotomy(&inst, &p)?;
        let bounds = verify_dichotomy(&inst, &p, &w.alternative)?;
        if let Some(c) = bounds.iter().find(|c| !c.holds) {
            return Err(fail(format!("sample {i}: {} fails on recount", c.name)));
        }
        checked += 1;
    }
    Ok(checked)
}

fn dichotomy(rng: &mut ChaCha8Rng, samples: usize) -> Result<usize> {
    for i in 0..samples {
        let d = gen::level_selection(&[2], 3, 2, &rat(rng.random_range(1..=8), 8), rng.random())?;
        let f = random_witness(rng, d.shape(), 2)?;
        let root_level = d.level_map()[f.levels[0]];
        let root = f.level_tuples(d.shape(), 0)[0];
        let Some(pos) = d.set(f.levels[0], root).ones().next() else { continue };
        let w = d.ambient().node(root_level, pos).clone();
        let theta = rat(rng.random_range(0..=4), 4);
        d.dichotomy_check(&f, &w, &theta).map_err(|e| fail(format!("sample {i}: {e}")))?;
    }
    Ok(samples)
}

fn constants() -> Result<usize> {
    let mut checked = 0;
    let eps = rat(1, 2);
    for k in 1..=3 {
        let r = default_r(&[2], 2, &eps, k as u64)?;
        let s = sequence_report(&r, &eps, k, &[2], 2)?;
        if let Some(p) = s.properties.iter().find(|p| !p.holds) {
            return Err(fail(format!("K={k}: property {} fails", p.name)));
        }
        checked += s.properties.len();
    }
    let (a, b, r) = (rat(1, 2), rat(3, 4), rat(1, 8));
    let g = gammas(&a, &b, &r)?;
    if !g.identities_hold(&a, &b, &r) {
        return Err(fail("γ identities fail"));
    }
    Ok(checked + 1)
}

/// A pointer selection run whose every state passes the trace conditions.
fn increment(seed: u64, cfg: &SearchConfig) -> Result<usize> {
    let d = gen::pointer_selection(&[2], 5, 2, seed)?;
    let params = IncrementParams {
        eps: rat(1, 2),
        r: pow(&rat(1, 2), 20),
        lambda: rat(1, 2),
        theta: rat(1, 8),
        heights: IncrementParams::relaxed_schedule(2, 1, 0, 0),
        relaxed: true,
    };
    let run = density_increment_run(&d, &params, cfg)?;
    Ok(run.trace.states().len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes_at_small_sample_counts() {
        let reports = run_suites(&[], 5, 1, &SearchConfig::default()).unwrap();
        assert_eq!(reports.len(), SUITES.len());
        for r in &reports {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn unknown_suite_is_rejected() {
        assert!(run_suites(&["nope".into()], 1, 0, &SearchConfig::default()).is_err());
    }
}
