//! The two steps of one density-increment iteration.
//!
//! [`selection_step`] either finds a subtree on which `D` is denser above a
//! successor of `w̃`, or a node `w''` and a subtree `Z''` with strong
//! denseness and strong negligibility above `w''`. [`coloring_step`] then
//! either finds a strongly correlated pair or fixes one direction `p0` in
//! which all pairs rooted in a large `Γ ⊆ B` are negligible.
//!
//! Both steps re-check every clause of their conclusion with the predicates
//! of [`LevelSelection`] before returning.

use std::collections::{BTreeMap, HashMap};

use fixedbitset::FixedBitSet;
use num_bigint::BigUint;

use crate::averaging::{combined_dichotomy_with, Alpha, CombinedAlternative, CombinedInstance, CombinedParams, DichotomyParams, Table};
use crate::constants::{with_auto_precision, IntervalValue, ParamExpr, DEFAULT_BITS};
use crate::error::{Error, Result};
use crate::rational::{from_usize, pow, Rat};
use crate::search::SearchConfig;
use crate::strong::enumerate::{count_with_levels, level_sets_top};
use crate::strong::{
    count_strong2_formula, enumerate_strong, enumerate_strong2_at, is_vector_strong_subtree, milliken_search, Shape,
    StrongCheck, StrongIter, VectorStrongWitness,
};
use crate::tree::{default_format, upow, Node};

use super::dhl::dhl_search;
use super::{CorrelationPair, LevelSelection, Threshold};

/// `α − γ0 − γ1 − γ2` with `γ0 = √(β+ρ²−α)`, `γ1 = √(γ0+γ0²)`, `γ2 = √(γ1+γ1²)`.
pub(crate) fn spread_level(alpha: &ParamExpr, beta: &Rat, rho: &Rat) -> ParamExpr {
    let v = ParamExpr::var;
    let next = |g: &str| (v(g) + v(g).powi(2)).sqrt();
    ParamExpr::let_in(
        "a",
        alpha.clone(),
        ParamExpr::let_in(
            "g0",
            (ParamExpr::lit(beta + rho * rho) - v("a")).sqrt(),
            ParamExpr::let_in("g1", next("g0"), ParamExpr::let_in("g2", next("g1"), v("a") - v("g0") - v("g1") - v("g2"))),
        ),
    )
}

fn alpha_source(t: &Threshold) -> Alpha<'_> {
    match t.as_exact() {
        Some(a) => Alpha::Exact(a),
        None => Alpha::Real(t.expr()),
    }
}

/// Height-2 subtrees of `z` with top own level `top` whose root tuple (index
/// level, flat) lies in the sorted list `roots`: `(own positions, index positions)`.
pub(crate) fn rooted(
    d: &LevelSelection,
    z: &VectorStrongWitness,
    top: usize,
    roots: &[(usize, usize)],
) -> Result<Vec<(VectorStrongWitness, VectorStrongWitness)>> {
    if roots.is_empty() {
        return Ok(Vec::new());
    }
    let own = z.shape(d.shape());
    let mut out = Vec::new();
    for g in enumerate_strong2_at(&own, top)? {
        let gv = z.compose(&g);
        let root = (gv.levels[0], gv.level_tuples(d.shape(), 0)[0]);
        if roots.binary_search(&root).is_ok() {
            out.push((g, gv));
        }
    }
    Ok(out)
}

fn top_tuples(d: &LevelSelection, g: &VectorStrongWitness) -> (usize, Vec<usize>) {
    (g.levels[1], g.level_tuples(d.shape(), 1))
}

fn check_subtree(d: &LevelSelection, z: &VectorStrongWitness, what: &str) -> Result<()> {
    if z.dim() != d.shape().dim() || z.levels.iter().any(|&n| n >= d.height()) || z.height() == 0 {
        return Err(Error::pre(format!("{what} does not fit the index tree")));
    }
    match is_vector_strong_subtree(d.index(), &z.node_sets(d.index()))? {
        StrongCheck::Strong => Ok(()),
        StrongCheck::Violation(v) => Err(Error::pre(format!("{what} is not a vector strong subtree: {v:?}"))),
    }
}

fn verified(holds: bool, clause: &str) -> Result<()> {
    if holds {
        Ok(())
    } else {
        Err(Error::Verification(clause.to_string()))
    }
}

/// `α·c ≤ x` decided through the enclosure of `α`.
fn alpha_times_le(alpha: &Threshold, c: &Rat, x: &Rat) -> Result<bool> {
    alpha.le(&(x / c))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionParams {
    pub alpha: Threshold,
    pub beta: Rat,
    pub rho: Rat,
    pub theta: Rat,
    pub lambda: Rat,
    /// Height `N` of the subtree taken from the successor trees.
    pub height: usize,
    /// Skip the smallness conditions on `γ0`, `λ` and `θ`.
    pub relaxed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SelectionOutcome {
    /// `D` is `(w, Z', β+ρ²/2)`-dense and `h(Z') = N`.
    Increment { w: Node, z: VectorStrongWitness },
    /// `Z''` agrees with `Z` up to level `m` and has height `m+1+N`; `b` lists
    /// the tuples of `⊗Z(m)` (flat indices) whose `D`-value contains `w`.
    Split { w: Node, z: VectorStrongWitness, b: Vec<usize> },
}

/// The successor trees `suc_{Z_i}(z)` of every `z ∈ Z_i(m+1)`, as one vector tree `S`.
struct Successors<'a> {
    shape: &'a Shape,
    z: &'a VectorStrongWitness,
    m: usize,
    /// Number of successor trees per coordinate and their first index in `S`.
    counts: Vec<usize>,
    offsets: Vec<usize>,
    s: Shape,
}

impl<'a> Successors<'a> {
    fn new(shape: &'a Shape, z: &'a VectorStrongWitness, m: usize) -> Self {
        let counts: Vec<usize> = shape.branching.iter().map(|&b| upow(b, m + 1)).collect();
        let offsets = counts.iter().scan(0, |acc, &c| Some(std::mem::replace(acc, *acc + c))).collect();
        let branching =
            shape.branching.iter().zip(&counts).flat_map(|(&b, &c)| std::iter::repeat_n(b, c)).collect();
        let s = Shape::new(branching, z.height() - m - 1);
        Successors { shape, z, m, counts, offsets, s }
    }

    /// `Π_z(s)` as `(index level, flat)`, for `z` given by own positions at level `m+1`.
    fn project(&self, zi: &[usize], n: usize, sidx: &[usize]) -> (usize, usize) {
        let level = self.m + 1 + n;
        let vpos: Vec<usize> = (0..self.shape.dim())
            .map(|i| {
                let own = zi[i] * upow(self.shape.branching[i], n) + sidx[self.offsets[i] + zi[i]];
                self.z.parts[i][level][own]
            })
            .collect();
        let vl = self.z.levels[level];
        (vl, self.shape.flatten(vl, &vpos))
    }

    /// `(π^i_z(⊗S'))_i` for one `z`, in index positions.
    fn lift_one(&self, zi: &[usize], sp: &VectorStrongWitness) -> VectorStrongWitness {
        let parts = (0..self.shape.dim())
            .map(|i| {
                let b = self.shape.branching[i];
                sp.levels
                    .iter()
                    .enumerate()
                    .map(|(k, &l)| {
                        let lv = self.m + 1 + l;
                        sp.parts[self.offsets[i] + zi[i]][k]
                            .iter()
                            .map(|&pos| self.z.parts[i][lv][zi[i] * upow(b, l) + pos])
                            .collect()
                    })
                    .collect()
            })
            .collect();
        VectorStrongWitness { levels: sp.levels.iter().map(|&l| self.z.levels[self.m + 1 + l]).collect(), parts }
    }

    /// `Z↾m ∪ ⋃_z π_z(⊗S'')`, in index positions.
    fn lift_all(&self, sp: &VectorStrongWitness) -> VectorStrongWitness {
        let mut levels = self.z.levels[..=self.m].to_vec();
        levels.extend(sp.levels.iter().map(|&l| self.z.levels[self.m + 1 + l]));
        let parts = (0..self.shape.dim())
            .map(|i| {
                let b = self.shape.branching[i];
                let mut lv = self.z.parts[i][..=self.m].to_vec();
                for (k, &l) in sp.levels.iter().enumerate() {
                    let zl = self.m + 1 + l;
                    let row = (0..self.counts[i])
                        .flat_map(|j| {
                            sp.parts[self.offsets[i] + j][k].iter().map(move |&pos| self.z.parts[i][zl][j * upow(b, l) + pos])
                        })
                        .collect();
                    lv.push(row);
                }
                lv
            })
            .collect();
        VectorStrongWitness { levels, parts }
    }
}

fn check_selection_params(d: &LevelSelection, m: usize, p: &SelectionParams) -> Result<()> {
    let b = &d.shape().branching;
    let bw = d.b_w() as usize;
    let pm1 = from_usize(d.shape().level_product_size(m + 1));
    let qm = Rat::from_integer(count_strong2_formula(b, m as u64).into());
    let below: Option<Rat> = if m >= 1 {
        let exact: BigUint = level_sets_top(m).iter().map(|ls| count_with_levels(&Shape::new(b.clone(), m + 1), ls)).sum();
        let exact = Rat::from_integer(exact.into());
        if exact >= qm {
            return Err(Error::Verification(format!("|Strong_2(Z,m)| = {exact} is not below q_m = {qm}")));
        }
        Some(exact)
    } else {
        None
    };
    with_auto_precision(DEFAULT_BITS, |bits| {
        let pt = |x: Rat| IntervalValue::point(x, bits);
        let a = p.alpha.at(bits)?;
        let g0 = pt(&p.beta + &p.rho * &p.rho).sub(&a).sqrt()?;
        let require = |lhs: &IntervalValue, rhs: &IntervalValue, name: &str| match lhs.le(rhs) {
            Some(true) => Ok(()),
            Some(false) => Err(Error::pre(format!("{name} fails: {lhs} > {rhs}"))),
            None => Err(Error::Undecidable { bits, what: name.to_string() }),
        };
        let cap = a.div(&pt(from_usize(12 * bw) * &pm1))?.pow(4);
        require(&g0, &cap, "γ0 ≤ (α/(12 b_W P^{m+1}))^4")?;
        require(&pt(p.lambda.clone()), &a.div(&pt(from_usize(12 * bw) * &qm))?, "λ ≤ α/(12 b_W q_m)")?;
        if let Some(count) = &below {
            let budget = a.mul(&pt(Rat::new(2.into(), 5.into())));
            require(&pt(count * &p.theta), &budget, "|Strong_2(Z,m)|·θ ≤ 2α/5")?;
        }
        Ok(())
    })
}

/// One selection step at level `m` of `z` (index positions) above `w̃`, with
/// `Γ` a sorted list of `(index level, flat)` tuples of `⊗Z↾(m−1)`.
pub fn selection_step(
    d: &LevelSelection,
    z: &VectorStrongWitness,
    m: usize,
    w_tilde: &Node,
    gamma: &[(usize, usize)],
    p: &SelectionParams,
    cfg: &SearchConfig,
) -> Result<SelectionOutcome> {
    let shape = d.shape();
    check_subtree(d, z, "Z")?;
    if z.height() < m + 2 {
        return Err(Error::InsufficientHeight { stage: "successor trees above level m+1".into(), required: m + 2 });
    }
    if p.height == 0 {
        return Err(Error::pre("N must be at least 1"));
    }
    let own = z.shape(shape);
    let zl = z.levels[m];
    let ell = d.level_map()[zl];
    let wt = d.w_pos(w_tilde)?;
    if wt.0 > ell {
        return Err(Error::pre(format!("hypothesis (d): w̃ = {w_tilde} lies above W-level {ell}")));
    }
    for zf in 0..own.level_product_size(m) {
        let suc = z.successor(shape, m, &own.unflatten(m, zf));
        if !d.dense_at(wt, &suc, &p.alpha)? {
            return Err(Error::pre(format!(
                "hypothesis (d): D is not (w̃, suc_Z(z), {})-dense for z = {}",
                p.alpha,
                d.index().tuple(zl, z.level_tuples(shape, m)[zf])
            )));
        }
    }
    if gamma.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::pre("Γ must be sorted without repeats"));
    }
    if m == 0 && !gamma.is_empty() {
        return Err(Error::pre("Γ must be empty at m = 0"));
    }
    if m >= 1 {
        let mut below: Vec<(usize, usize)> = z.restrict(m - 1).all_tuples(shape);
        below.sort_unstable();
        if let Some(g) = gamma.iter().find(|g| below.binary_search(g).is_err()) {
            return Err(Error::pre(format!("Γ ⊄ ⊗Z↾(m−1): {}", d.index().tuple(g.0, g.1))));
        }
        for top in m..z.height() {
            for (_, gv) in rooted(d, z, top, gamma)? {
                let (n1, flats) = top_tuples(d, &gv);
                if !d.negligible_at(n1, &flats, wt, &p.theta)? {
                    return Err(Error::pre(format!(
                        "hypothesis (e): a Γ-rooted subtree with top level {top} is not θ-negligible at w̃"
                    )));
                }
            }
        }
    }
    if !p.relaxed {
        check_selection_params(d, m, p)?;
    }

    // The successor trees and the functions on S × 𝒲.
    let succ = Successors::new(shape, z, m);
    let hs = succ.s.height;
    let mut cells = Vec::with_capacity(hs);
    let mut rows: Vec<(usize, Vec<usize>)> = Vec::new();
    for n in 0..hs {
        let start = rows.len();
        for f in 0..succ.s.level_product_size(n) {
            rows.push((n, succ.s.unflatten(n, f)));
        }
        cells.push((start..rows.len()).collect::<Vec<usize>>());
    }
    let ambient = d.ambient();
    let fiber0 = ambient.fiber(wt.0, wt.1, ell);
    let fiber1 = ambient.fiber(wt.0, wt.1, ell + 1);
    let bw = d.b_w() as usize;
    let blocks: Vec<Vec<usize>> = (0..fiber0.len()).map(|k| (k * bw..(k + 1) * bw).collect()).collect();
    let columns: Vec<(usize, usize)> = fiber1.clone().map(|i| (ell + 1, i)).collect();

    let zs: Vec<Vec<usize>> = (0..own.level_product_size(m + 1)).map(|zf| own.unflatten(m + 1, zf)).collect();
    let mut f_tables = Vec::with_capacity(zs.len());
    for zi in &zs {
        let mut t = Vec::with_capacity(rows.len());
        for (n, sidx) in &rows {
            let (vl, vf) = succ.project(zi, *n, sidx);
            let l = d.level_map()[vl];
            t.push(columns.iter().map(|&c| d.dens_rel(d.set(vl, vf), l, c)).collect::<Result<Vec<_>>>()?);
        }
        f_tables.push(Table(t));
    }
    let family = rooted(d, z, m + 1, gamma)?;
    let mut g_tables = Vec::with_capacity(family.len());
    for (g, _) in &family {
        let tops = g.level_tuples(&own, 1);
        let mut t = Vec::with_capacity(rows.len());
        for (n, sidx) in &rows {
            let projected: Vec<(usize, usize)> = tops.iter().map(|&zf| succ.project(&zs[zf], *n, sidx)).collect();
            let vl = projected[0].0;
            let flats: Vec<usize> = projected.iter().map(|x| x.1).collect();
            let inter = d.common(vl, &flats);
            let l = d.level_map()[vl];
            t.push(columns.iter().map(|&c| d.dens_rel(&inter, l, c)).collect::<Result<Vec<_>>>()?);
        }
        g_tables.push(Table(t));
    }

    // The set A of admissible blocks.
    let zm = z.level_tuples(shape, m);
    let size_m = from_usize(zm.len());
    let two = Rat::from_integer(2.into());
    let mut excluded = FixedBitSet::with_capacity(ambient.level_size(ell));
    for (_, gv) in rooted(d, z, m, gamma)? {
        let (n1, flats) = top_tuples(d, &gv);
        excluded.union_with(&d.common(n1, &flats));
    }
    let mut selected = Vec::new();
    for (k, w) in fiber0.clone().enumerate() {
        let hits = zm.iter().filter(|&&f| d.set(zl, f).contains(w)).count();
        if alpha_times_le(&p.alpha, &two.recip(), &(from_usize(hits) / &size_m))? && !excluded.contains(w) {
            selected.push(k);
        }
    }

    let inst = CombinedInstance {
        format: default_format(),
        cells,
        blocks,
        selected,
        f: f_tables,
        g: g_tables,
    };
    let params = CombinedParams {
        dichotomy: DichotomyParams::new(p.alpha.at(DEFAULT_BITS)?.lo().clone(), p.beta.clone(), p.rho.clone()),
        theta: p.theta.clone(),
        lambda: p.lambda.clone(),
        relaxed: p.relaxed,
        strict_cap: true,
    };
    let witness = combined_dichotomy_with(&inst, &params, alpha_source(&p.alpha))?;
    let to_sets = |delta: &[usize]| -> Vec<FixedBitSet> {
        let mut sets: Vec<FixedBitSet> =
            (0..hs).map(|n| FixedBitSet::with_capacity(succ.s.level_product_size(n))).collect();
        for &s in delta {
            let (n, sidx) = &rows[s];
            sets[*n].insert(succ.s.flatten(*n, sidx));
        }
        sets
    };
    let all_levels: Vec<usize> = (0..hs).collect();
    match witness.alternative {
        CombinedAlternative::Concentrated { j0, w0, delta0, .. } => {
            let stage = "DHL application (alternative I)";
            let sp = dhl_search(&succ.s, &to_sets(&delta0), &all_levels, p.height, cfg)?
                .ok_or_else(|| Error::InsufficientHeight { stage: stage.into(), required: p.height })?;
            let zp = succ.lift_one(&zs[j0], &sp);
            let wp = columns[w0];
            check_subtree(d, &zp, "Z'").map_err(|e| Error::Verification(e.to_string()))?;
            verified(zp.height() == p.height, "h(Z') = N")?;
            let level = Threshold::exact(&p.beta + &p.rho * &p.rho / &two);
            verified(d.dense_at(wp, &zp, &level)?, "D is (w', Z', β+ρ²/2)-dense")?;
            Ok(SelectionOutcome::Increment { w: d.w_node(wp), z: zp })
        }
        CombinedAlternative::Spread { k0, delta_star, .. } => {
            let stage = "DHL application (alternative II)";
            let sp = dhl_search(&succ.s, &to_sets(&delta_star), &all_levels, p.height, cfg)?
                .ok_or_else(|| Error::InsufficientHeight { stage: stage.into(), required: p.height })?;
            let z2 = succ.lift_all(&sp);
            let w2 = (ell, fiber0.start + k0);
            let b: Vec<usize> = zm.iter().copied().filter(|&f| d.set(zl, f).contains(w2.1)).collect::<Vec<_>>();
            let mut b_sorted = b.clone();
            b_sorted.sort_unstable();
            verify_split(d, z, m, gamma, p, w2, &z2, &b_sorted)?;
            Ok(SelectionOutcome::Split { w: d.w_node(w2), z: z2, b: b_sorted })
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn verify_split(
    d: &LevelSelection,
    z: &VectorStrongWitness,
    m: usize,
    gamma: &[(usize, usize)],
    p: &SelectionParams,
    w2: (usize, usize),
    z2: &VectorStrongWitness,
    b: &[usize],
) -> Result<()> {
    let shape = d.shape();
    check_subtree(d, z2, "Z''").map_err(|e| Error::Verification(e.to_string()))?;
    verified(z2.height() == m + 1 + p.height, "h(Z'') = m+1+N")?;
    verified(z2.restrict(m) == z.restrict(m), "Z''↾m = Z↾m")?;
    let zl = z.levels[m];
    let size_m = from_usize(z.level_tuples(shape, m).len());
    let half = Rat::new(1.into(), 2.into());
    verified(alpha_times_le(&p.alpha, &half, &(from_usize(b.len()) / size_m))?, "|B| ≥ (α/2)|⊗Z(m)|")?;
    verified(!b.is_empty() && b.iter().all(|&f| d.set(zl, f).contains(w2.1)), "w'' ∈ ⋂_B D")?;
    for (_, gv) in rooted(d, z, m, gamma)? {
        let (n1, flats) = top_tuples(d, &gv);
        verified(!d.common(n1, &flats).contains(w2.1), "w'' avoids every Γ-rooted intersection at level m")?;
    }
    let alpha2 = Threshold::real(spread_level(p.alpha.expr(), &p.beta, &p.rho))?;
    let own2 = z2.shape(shape);
    for zf in 0..own2.level_product_size(m + 1) {
        let suc = z2.successor(shape, m + 1, &own2.unflatten(m + 1, zf));
        verified(d.strongly_dense_at(w2, &suc, &alpha2)?, "D is (w'', suc_Z''(z), α−γ0−γ1−γ2)-strongly dense")?;
    }
    let cap = &p.theta / pow(&p.lambda, 3);
    for top in m + 1..z2.height() {
        for (_, gv) in rooted(d, z2, top, gamma)? {
            let (n1, flats) = top_tuples(d, &gv);
            verified(d.strongly_negligible_at(n1, &flats, w2, &cap)?, "Γ-rooted pairs are strongly θλ^−3-negligible at w''")?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ColoringOutcome {
    /// A strongly `θ`-correlated pair whose root lies in `B`.
    Correlated(CorrelationPair),
    /// Every height-2 subtree of `Z'` rooted in `Γ` gives a `θ`-negligible
    /// pair with `w⌢p0`; `gamma` lists flat indices of `⊗Z(m)`.
    Colored { z: VectorStrongWitness, gamma: Vec<usize>, p0: u32 },
}

/// One coloring step at level `m` of `z` for the tuples `b` of `⊗Z(m)` and a
/// node `w ∈ ⋂_B D`. The resulting `Z'` agrees with `Z` up to level `m` and
/// has height `m+1+N`.
#[allow(clippy::too_many_arguments)]
pub fn coloring_step(
    d: &LevelSelection,
    z: &VectorStrongWitness,
    m: usize,
    b: &[usize],
    w: &Node,
    theta: &Rat,
    height: usize,
    cfg: &SearchConfig,
) -> Result<ColoringOutcome> {
    let shape = d.shape();
    check_subtree(d, z, "Z")?;
    if m >= z.height() {
        return Err(Error::pre(format!("level {m} lies outside Z")));
    }
    if b.is_empty() {
        return Err(Error::pre("B must be nonempty"));
    }
    if b.windows(2).any(|x| x[0] >= x[1]) {
        return Err(Error::pre("B must be sorted without repeats"));
    }
    if height == 0 {
        return Err(Error::pre("N must be at least 1"));
    }
    let own = z.shape(shape);
    let zl = z.levels[m];
    let zm = z.level_tuples(shape, m);
    let mut own_of: Vec<usize> = Vec::with_capacity(b.len());
    for &f in b {
        match zm.iter().position(|&x| x == f) {
            Some(i) => own_of.push(i),
            None => return Err(Error::pre(format!("B ⊄ ⊗Z(m): {}", d.index().tuple(zl, f)))),
        }
    }
    let wp = d.w_pos(w)?;
    if wp.0 != d.level_map()[zl] || b.iter().any(|&f| !d.set(zl, f).contains(wp.1)) {
        return Err(Error::pre(format!("w = {w} is not in ⋂_B D")));
    }
    if z.height() < m + 2 {
        return Err(Error::InsufficientHeight { stage: "coloring (height of U)".into(), required: m + 2 });
    }

    let sets: Vec<Vec<usize>> = (m + 1..z.height()).map(|t| vec![m, t]).collect();
    for g in StrongIter::with_level_sets(&own, sets) {
        let root = g.level_tuples(&own, 0)[0];
        if own_of.binary_search(&root).is_err() {
            continue;
        }
        let gv = z.compose(&g);
        if d.is_strongly_correlated(&gv, w, theta)?.holds {
            return Ok(ColoringOutcome::Correlated(CorrelationPair { f: gv, w: w.clone() }));
        }
    }

    let hu = z.height() - m;
    if height + 1 > hu {
        return Err(Error::InsufficientHeight { stage: "Milliken search".into(), required: height + 1 });
    }
    let u = Shape::new(shape.branching.clone(), hu);
    let zi: Vec<Vec<usize>> = own_of.iter().map(|&o| own.unflatten(m, o)).collect();
    // Φ_z(F) in own positions of Z.
    let phi = |zi: &[usize], f: &VectorStrongWitness| -> VectorStrongWitness {
        let l = f.levels[1];
        let parts = (0..shape.dim())
            .map(|i| {
                let b = shape.branching[i];
                vec![vec![zi[i]], f.parts[i][1].iter().map(|&pos| zi[i] * upow(b, l) + pos).collect()]
            })
            .collect();
        VectorStrongWitness { levels: vec![m, m + l], parts }
    };
    let children = d.children(wp);
    let mut palette: BTreeMap<Vec<u32>, u32> = BTreeMap::new();
    let mut colors: HashMap<VectorStrongWitness, u32> = HashMap::new();
    let mut vectors: Vec<Vec<u32>> = Vec::new();
    for f in enumerate_strong(&u, 2, Some(0))? {
        let mut vector = Vec::with_capacity(zi.len());
        for z_own in &zi {
            let gv = z.compose(&phi(z_own, &f));
            let (n1, flats) = top_tuples(d, &gv);
            let mut least = None;
            for (p, &c) in children.iter().enumerate() {
                if d.negligible_at(n1, &flats, c, theta)? {
                    least = Some(p as u32);
                    break;
                }
            }
            match least {
                Some(p) => vector.push(p),
                None => return Err(Error::Verification("an uncorrelated pair has no negligible direction".into())),
            }
        }
        let next = palette.len() as u32;
        let id = *palette.entry(vector.clone()).or_insert(next);
        if id == next {
            vectors.push(vector);
        }
        colors.insert(f, id);
    }
    let coloring = |f: &VectorStrongWitness| -> Result<u32> {
        colors.get(f).copied().ok_or_else(|| Error::Verification("uncolored subtree".into()))
    };
    let up = milliken_search(&u, &coloring, 2, height + 1, Some(0), cfg)?
        .ok_or_else(|| Error::InsufficientHeight { stage: "Milliken search".into(), required: height + 1 })?;
    let first = enumerate_strong(&up.shape(&u), 2, Some(0))?.next().expect("height at least 2");
    let vector = &vectors[coloring(&up.compose(&first))? as usize];

    let bw = d.b_w() as usize;
    let mut tally = vec![0usize; bw];
    for &p in vector {
        tally[p as usize] += 1;
    }
    let p0 = (0..bw).max_by_key(|&p| (tally[p], std::cmp::Reverse(p))).expect("b_W ≥ 2") as u32;
    let gamma: Vec<usize> = b.iter().zip(vector).filter(|(_, &p)| p == p0).map(|(&f, _)| f).collect();

    let levels: Vec<usize> = (0..m).chain(up.levels.iter().map(|&l| m + l)).collect();
    let parts = (0..shape.dim())
        .map(|i| {
            let b = shape.branching[i];
            let mut lv: Vec<Vec<usize>> = (0..m).map(|j| (0..upow(b, j)).collect()).collect();
            for (k, &l) in up.levels.iter().enumerate() {
                lv.push((0..upow(b, m)).flat_map(|j| up.parts[i][k].iter().map(move |&pos| j * upow(b, l) + pos)).collect());
            }
            lv
        })
        .collect();
    let zp = z.compose(&VectorStrongWitness { levels, parts });

    check_subtree(d, &zp, "Z'").map_err(|e| Error::Verification(e.to_string()))?;
    verified(zp.height() == m + 1 + height, "h(Z') = m+1+N")?;
    verified(zp.restrict(m) == z.restrict(m), "Z'↾m = Z↾m")?;
    verified(gamma.len() * bw >= b.len(), "|Γ| ≥ |B|/b_W")?;
    let roots: Vec<(usize, usize)> = gamma.iter().map(|&f| (zl, f)).collect();
    let target = children[p0 as usize];
    for top in m + 1..zp.height() {
        for (_, gv) in rooted(d, &zp, top, &roots)? {
            let (n1, flats) = top_tuples(d, &gv);
            verified(d.negligible_at(n1, &flats, target, theta)?, "Γ-rooted pairs of Z' are θ-negligible at w⌢p0")?;
        }
    }
    Ok(ColoringOutcome::Colored { z: zp, gamma, p0 })
}
