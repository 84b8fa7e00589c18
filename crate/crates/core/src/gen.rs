//! Seeded random fixtures. The same seed gives the same instance on every platform.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::averaging::{AvgInstance, CombinedInstance, Table};
use crate::error::{Error, Result};
use crate::levelsel::LevelSelection;
use crate::prob::{Event, FiniteProbSpace};
use crate::rational::{ceil, from_usize, Rat};
use crate::tree::{default_format, HomTree, VectorTree};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A level selection on the full vector tree with branchings `b` and height
/// `height`, into the full `b_w`-ary tree of height `height+1` with level map
/// `n ↦ n+1`. Each `D(t)` is a uniform subset of size `⌈density·|W(n+1)|⌉`.
pub fn level_selection(b: &[u32], height: usize, b_w: u32, density: &Rat, seed: u64) -> Result<LevelSelection> {
    if *density < Rat::from_integer(0.into()) || *density > Rat::from_integer(1.into()) {
        return Err(Error::pre("density must lie in [0,1]"));
    }
    let index = VectorTree::full(b, height)?;
    let ambient = HomTree::full(b_w, height + 1)?;
    let mut r = rng(seed);
    let mut chosen: Vec<Vec<Vec<usize>>> = Vec::with_capacity(height);
    for n in 0..height {
        let size = ambient.level_size(n + 1);
        let k = usize::try_from(ceil(&(density * from_usize(size)))).expect("bounded by the level size");
        chosen.push((0..index.level_product_size(n)).map(|_| sample(&mut r, size, k).into_vec()).collect());
    }
    LevelSelection::from_fn(index, ambient, (1..=height).collect(), |n, f, w| chosen[n][f].contains(&w))
}

/// A level selection with level map `n ↦ 2n+1` into the full `b_w`-ary tree
/// of height `2·height`. For `t ∈ ⊗V(n)`, `D(t)` holds the `u ∈ W(2n+1)` with
/// `u_{2n} = t_j + σ(u↾2n) mod b_w`, where `j < n` is the least index with
/// `u_{2j+1} ≠ 0` (the term is `0` if there is none), `t_j` is the `j`-th
/// digit of the first coordinate of `t` and `σ` is a seeded random mask.
///
/// Every fiber has relative density exactly `1/b_w`, and two tuples whose
/// first coordinates split at level `m` have disjoint values above any
/// `u` with `u_{2m+1} ≠ 0 = u_1 = u_3 = … = u_{2m−1}`.
pub fn pointer_selection(b: &[u32], height: usize, b_w: u32, seed: u64) -> Result<LevelSelection> {
    let index = VectorTree::full(b, height)?;
    let ambient = HomTree::full(b_w, 2 * height)?;
    let mut r = rng(seed);
    let masks: Vec<Vec<u32>> =
        (0..height).map(|n| (0..ambient.level_size(2 * n)).map(|_| r.random_range(0..b_w)).collect()).collect();
    let tuples: Vec<Vec<Vec<u32>>> = (0..height)
        .map(|n| (0..index.level_product_size(n)).map(|f| index.tuple(n, f).0[0].0.clone()).collect())
        .collect();
    let level_map = (0..height).map(|n| 2 * n + 1).collect();
    let amb = ambient.clone();
    LevelSelection::from_fn(index, ambient, level_map, |n, f, w| {
        let u = &amb.node(2 * n + 1, w).0;
        let t = &tuples[n][f];
        let digit = (0..n).find(|&j| u[2 * j + 1] != 0).map_or(0, |j| t[j]);
        let prefix = w / b_w as usize;
        u[2 * n] == (digit + masks[n][prefix]) % b_w
    })
}

fn random_table(r: &mut ChaCha8Rng, s_count: usize, w_count: usize, denom: u32, max: u32) -> Table {
    Table::from_fn(s_count, w_count, |_, _| Rat::new(r.random_range(0..=max).into(), denom.into()))
}

fn consecutive_cells(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut start = 0;
    sizes
        .iter()
        .map(|&k| {
            let cell = (start..start + k).collect();
            start += k;
            cell
        })
        .collect()
}

/// An averaging instance with consecutive cells of the given sizes and
/// values `k/denom`, `0 ≤ k ≤ denom`.
pub fn avg_instance(cell_sizes: &[usize], w_count: usize, denom: u32, seed: u64) -> Result<AvgInstance> {
    if denom == 0 {
        return Err(Error::pre("denominator must be positive"));
    }
    let cells = consecutive_cells(cell_sizes);
    let s_count = cell_sizes.iter().sum();
    AvgInstance::new(cells, random_table(&mut rng(seed), s_count, w_count, denom, denom))
}

/// A combined instance with `blocks` blocks of size `block_size`, all selected,
/// `f_count` functions into `[0,1]` and `g_count` into `[0,2]`.
pub fn combined_instance(
    cell_sizes: &[usize],
    blocks: usize,
    block_size: usize,
    f_count: usize,
    g_count: usize,
    denom: u32,
    seed: u64,
) -> Result<CombinedInstance> {
    if denom == 0 {
        return Err(Error::pre("denominator must be positive"));
    }
    let mut r = rng(seed);
    let s_count = cell_sizes.iter().sum();
    let w_count = blocks * block_size;
    let f = (0..f_count).map(|_| random_table(&mut r, s_count, w_count, denom, denom)).collect();
    let g = (0..g_count).map(|_| random_table(&mut r, s_count, w_count, denom, 2 * denom)).collect();
    let inst = CombinedInstance {
        format: default_format(),
        cells: consecutive_cells(cell_sizes),
        blocks: (0..blocks).map(|k| (k * block_size..(k + 1) * block_size).collect()).collect(),
        selected: (0..blocks).collect(),
        f,
        g,
    };
    inst.validate()?;
    Ok(inst)
}

/// A probability space with `atoms` atoms of random positive integer weights
/// (at most `max_weight`), normalized.
pub fn prob_space(atoms: usize, max_weight: u32, seed: u64) -> Result<FiniteProbSpace> {
    if max_weight == 0 {
        return Err(Error::pre("weights must be positive"));
    }
    let mut r = rng(seed);
    let raw: Vec<u32> = (0..atoms).map(|_| r.random_range(1..=max_weight)).collect();
    let total: u64 = raw.iter().map(|&x| x as u64).sum();
    FiniteProbSpace::new(raw.into_iter().map(|x| Rat::new(x.into(), total.into())).collect())
}

/// `count` events over `atoms` atoms, each atom included with probability `p`.
pub fn events(atoms: usize, count: usize, p: f64, seed: u64) -> Result<Vec<Event>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::pre("inclusion probability must lie in [0,1]"));
    }
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let members: Vec<usize> = (0..atoms).filter(|_| r.random_bool(p)).collect();
            Event::from_atoms(atoms, &members)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    #[test]
    fn level_selection_is_reproducible_and_dense() {
        let a = level_selection(&[2], 3, 2, &rat(1, 2), 7).unwrap();
        let b = level_selection(&[2], 3, 2, &rat(1, 2), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.density_of(), rat(1, 2));
        assert_ne!(a, level_selection(&[2], 3, 2, &rat(1, 2), 8).unwrap());
    }

    #[test]
    fn pointer_selection_has_exact_density() {
        let d = pointer_selection(&[2], 3, 2, 5).unwrap();
        assert_eq!(d.density_of(), rat(1, 2));
        assert_eq!(d.level_map(), &[1, 3, 5]);
        assert_eq!(d, pointer_selection(&[2], 3, 2, 5).unwrap());
    }

    #[test]
    fn instances_validate() {
        let a = avg_instance(&[2, 3], 4, 4, 1).unwrap();
        assert_eq!(a.f.s_count(), 5);
        let c = combined_instance(&[1, 2], 3, 2, 2, 1, 8, 1).unwrap();
        assert_eq!(c.f[0].w_count(), 6);
        let p = prob_space(5, 9, 3).unwrap();
        assert_eq!(p.weights().iter().sum::<Rat>(), rat(1, 1));
        assert_eq!(events(6, 4, 0.5, 2).unwrap().len(), 4);
    }
}
