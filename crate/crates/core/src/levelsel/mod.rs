//! Level selections `D: ⊗V → subsets of single levels of W`, the
//! correlation, negligibility and density predicates on them, brute-force
//! dense Halpern–Läuchli searches, and the density-increment machinery.
//!
//! Tuples of `⊗V(n)` are addressed by flat index (see [`Shape::flatten`]) and
//! nodes of `W` by `(level, position)`; the public predicates take nodes.

mod dhl;
mod increment;
mod steps;

pub use dhl::{dhl_search, udhl_bruteforce, UdhlOutcome};
pub use increment::{
    density_increment_run, ExhaustReason, IncrementOutcome, IncrementParams, IncrementRun, IncrementState, IncrementTrace,
    StageHeights, StateRecord,
};
pub use steps::{coloring_step, selection_step, ColoringOutcome, SelectionOutcome, SelectionParams};

use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::constants::{evaluate, with_auto_precision, IntervalValue, Mode, ParamExpr, StubProvider, Value, DEFAULT_BITS};
use crate::error::{Error, Result};
use crate::rational::{serde_rat, Rat};
use crate::search::{Meter, SearchConfig};
use crate::strong::{enumerate_strong, Shape, VectorStrongWitness, WitnessJson};
use crate::tree::{check_format, default_format, HomTree, HomTreeJson, Node, TupleNode, VectorTree};

/// A level selection over the index tree `V` into the ambient tree `W`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelSelection {
    index: VectorTree,
    shape: Shape,
    ambient: HomTree,
    level_map: Vec<usize>,
    /// `sets[n][flat]`: positions in `W(level_map[n])`.
    sets: Vec<Vec<FixedBitSet>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Assignment {
    pub tuple: TupleNode,
    pub nodes: Vec<Node>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelSelectionJson {
    #[serde(default = "default_format")]
    pub format: String,
    pub vector_tree: Vec<HomTreeJson>,
    pub ambient: HomTreeJson,
    pub level_map: Vec<usize>,
    pub assignments: Vec<Assignment>,
}

impl LevelSelection {
    pub fn new(index: VectorTree, ambient: HomTree, level_map: Vec<usize>, sets: Vec<Vec<FixedBitSet>>) -> Result<Self> {
        let shape = Shape::of(&index);
        if level_map.len() != index.height() {
            return Err(Error::pre(format!(
                "level map has {} entries for an index tree of height {}",
                level_map.len(),
                index.height()
            )));
        }
        if level_map.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::pre("level map must be strictly increasing"));
        }
        if level_map.last().is_some_and(|&l| l >= ambient.height()) {
            return Err(Error::pre(format!("level map exceeds the ambient height {}", ambient.height())));
        }
        if sets.len() != index.height() {
            return Err(Error::pre("one family of sets per index level is required"));
        }
        for (n, level) in sets.iter().enumerate() {
            if level.len() != shape.level_product_size(n) {
                return Err(Error::pre(format!("level {n}: D must be defined on every tuple")));
            }
            let size = ambient.level_size(level_map[n]);
            if level.iter().any(|s| s.len() != size) {
                return Err(Error::pre(format!("level {n}: sets must lie in W({})", level_map[n])));
            }
        }
        Ok(LevelSelection { index, shape, ambient, level_map, sets })
    }

    /// `D(t) = {w ∈ W(ℓ_n) : member(n, flat, position of w)}`.
    pub fn from_fn(
        index: VectorTree,
        ambient: HomTree,
        level_map: Vec<usize>,
        mut member: impl FnMut(usize, usize, usize) -> bool,
    ) -> Result<Self> {
        let shape = Shape::of(&index);
        if level_map.len() != index.height() || level_map.iter().any(|&l| l >= ambient.height()) {
            return Err(Error::pre("level map does not fit the index and ambient trees"));
        }
        let sets = (0..index.height())
            .map(|n| {
                let size = ambient.level_size(level_map[n]);
                (0..shape.level_product_size(n))
                    .map(|f| {
                        let mut s = FixedBitSet::with_capacity(size);
                        for w in 0..size {
                            s.set(w, member(n, f, w));
                        }
                        s
                    })
                    .collect()
            })
            .collect();
        Self::new(index, ambient, level_map, sets)
    }

    /// Every `D(t)` is the whole level.
    pub fn full(index: VectorTree, ambient: HomTree, level_map: Vec<usize>) -> Result<Self> {
        Self::from_fn(index, ambient, level_map, |_, _, _| true)
    }

    pub fn index(&self) -> &VectorTree {
        &self.index
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn ambient(&self) -> &HomTree {
        &self.ambient
    }

    pub fn level_map(&self) -> &[usize] {
        &self.level_map
    }

    pub fn height(&self) -> usize {
        self.index.height()
    }

    /// `D(t)` for the tuple at index level `n` with flat index `flat`.
    pub fn set(&self, n: usize, flat: usize) -> &FixedBitSet {
        &self.sets[n][flat]
    }

    pub fn b_w(&self) -> u32 {
        self.ambient.branching()
    }

    pub(crate) fn w_pos(&self, w: &Node) -> Result<(usize, usize)> {
        self.ambient
            .position(w)
            .ok_or_else(|| Error::NotSubset(format!("node {w} is not in the ambient tree")))
    }

    pub(crate) fn w_node(&self, (l, i): (usize, usize)) -> Node {
        self.ambient.node(l, i).clone()
    }

    pub(crate) fn children(&self, (l, i): (usize, usize)) -> Vec<(usize, usize)> {
        let b = self.b_w() as usize;
        (0..b).map(|p| (l + 1, i * b + p)).collect()
    }

    /// `dens(X | w)` for `X ⊆ W(l)`.
    pub(crate) fn dens_rel(&self, set: &FixedBitSet, l: usize, (m, i): (usize, usize)) -> Result<Rat> {
        if m > l {
            return Err(Error::pre(format!("W-level {m} of the node lies above the set's W-level {l}")));
        }
        let fiber = self.ambient.fiber(m, i, l);
        let len = fiber.len();
        let hit = set.ones().filter(|p| fiber.contains(p)).count();
        Ok(Rat::new(hit.into(), len.into()))
    }

    /// `⋂ D(t)` over the given tuples of `⊗V(n)`.
    pub(crate) fn common(&self, n: usize, flats: &[usize]) -> FixedBitSet {
        let size = self.ambient.level_size(self.level_map[n]);
        let mut out = FixedBitSet::with_capacity(size);
        out.insert_range(..);
        for &f in flats {
            out.intersect_with(&self.sets[n][f]);
        }
        out
    }

    /// `δ(D) = min_t dens(D(t))`.
    pub fn density_of(&self) -> Rat {
        let mut best: Option<Rat> = None;
        for (n, level) in self.sets.iter().enumerate() {
            let size = self.ambient.level_size(self.level_map[n]);
            for s in level {
                let d = Rat::new(s.count_ones(..).into(), size.into());
                if best.as_ref().is_none_or(|b| d < *b) {
                    best = Some(d);
                }
            }
        }
        best.unwrap_or_else(|| Rat::from_integer(1.into()))
    }

    fn check_witness(&self, f: &VectorStrongWitness, height: Option<usize>) -> Result<()> {
        if f.dim() != self.shape.dim() || f.levels.iter().any(|&n| n >= self.height()) {
            return Err(Error::pre("witness does not fit the index tree"));
        }
        if let Some(h) = height {
            if f.height() != h {
                return Err(Error::pre(format!("expected a subtree of height {h}, got {}", f.height())));
            }
        }
        Ok(())
    }

    /// Definition of a strongly `θ`-correlated pair, with every fiber density.
    pub fn is_strongly_correlated(&self, f: &VectorStrongWitness, w: &Node, theta: &Rat) -> Result<CorrelationCertificate> {
        self.check_witness(f, Some(2))?;
        let wp = self.w_pos(w)?;
        let (n0, n1) = (f.levels[0], f.levels[1]);
        let top = self.level_map[n1];
        if wp.0 + 1 > top {
            return Err(Error::pre(format!(
                "node {w} has immediate successors above W-level {top} of the intersection"
            )));
        }
        let root = f.level_tuples(&self.shape, 0)[0];
        let member = wp.0 == self.level_map[n0] && self.sets[n0][root].contains(wp.1);
        let inter = self.common(n1, &f.level_tuples(&self.shape, 1));
        let fiber_densities =
            self.children(wp).into_iter().map(|c| self.dens_rel(&inter, top, c)).collect::<Result<Vec<_>>>()?;
        let holds = member && fiber_densities.iter().all(|d| d >= theta);
        Ok(CorrelationCertificate { holds, member, fiber_densities })
    }

    fn negligible_at(&self, n: usize, flats: &[usize], wp: (usize, usize), theta: &Rat) -> Result<bool> {
        if flats.is_empty() {
            return Err(Error::pre("negligibility needs a nonempty family of tuples"));
        }
        if let Some(&f) = flats.iter().find(|&&f| f >= self.shape.level_product_size(n)) {
            return Err(Error::Range { what: "tuple index", value: f, limit: self.shape.level_product_size(n) });
        }
        let l = self.level_map[n];
        Ok(self.dens_rel(&self.common(n, flats), l, wp)? < *theta)
    }

    /// `dens(⋂ D(t) | w) < θ` over the tuples `flats` of `⊗V(n)`.
    pub fn is_negligible(&self, n: usize, flats: &[usize], w: &Node, theta: &Rat) -> Result<bool> {
        self.negligible_at(n, flats, self.w_pos(w)?, theta)
    }

    /// Negligible above every immediate successor of `w`.
    pub fn is_strongly_negligible(&self, n: usize, flats: &[usize], w: &Node, theta: &Rat) -> Result<bool> {
        let wp = self.w_pos(w)?;
        self.strongly_negligible_at(n, flats, wp, theta)
    }

    pub(crate) fn strongly_negligible_at(&self, n: usize, flats: &[usize], wp: (usize, usize), theta: &Rat) -> Result<bool> {
        if wp.0 + 1 > self.level_map[n] {
            return Err(Error::pre(format!("W-level {} has no successors at or below W-level {}", wp.0, self.level_map[n])));
        }
        for c in self.children(wp) {
            if !self.negligible_at(n, flats, c, theta)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub(crate) fn dense_at(&self, wp: (usize, usize), s: &VectorStrongWitness, alpha: &Threshold) -> Result<bool> {
        self.check_witness(s, None)?;
        for (n, flat) in s.all_tuples(&self.shape) {
            let l = self.level_map[n];
            if !alpha.le(&self.dens_rel(&self.sets[n][flat], l, wp)?)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// `dens(D(s) | w) ≥ α` for every `s ∈ ⊗S`.
    pub fn is_dense(&self, w: &Node, s: &VectorStrongWitness, alpha: &Threshold) -> Result<bool> {
        self.dense_at(self.w_pos(w)?, s, alpha)
    }

    /// Dense above every immediate successor of `w`.
    pub fn is_strongly_dense(&self, w: &Node, s: &VectorStrongWitness, alpha: &Threshold) -> Result<bool> {
        self.strongly_dense_at(self.w_pos(w)?, s, alpha)
    }

    pub(crate) fn strongly_dense_at(&self, wp: (usize, usize), s: &VectorStrongWitness, alpha: &Threshold) -> Result<bool> {
        if wp.0 + 1 >= self.ambient.height() {
            return Err(Error::pre("a maximal node has no immediate successors"));
        }
        for c in self.children(wp) {
            if !self.dense_at(c, s, alpha)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Either the pair is strongly `θ`-correlated or some direction `p` makes
    /// `(⊗F(1), w⌢p)` `θ`-negligible; the least such `p` is returned.
    pub fn dichotomy_check(&self, f: &VectorStrongWitness, w: &Node, theta: &Rat) -> Result<Dichotomy> {
        let cert = self.is_strongly_correlated(f, w, theta)?;
        if !cert.member {
            return Err(Error::pre(format!("node {w} is not in D of the root")));
        }
        let wp = self.w_pos(w)?;
        let (n1, top) = (f.levels[1], f.level_tuples(&self.shape, 1));
        let mut first = None;
        for (p, c) in self.children(wp).into_iter().enumerate() {
            if self.negligible_at(n1, &top, c, theta)? {
                first = Some(p as u32);
                break;
            }
        }
        match (cert.holds, first) {
            (true, None) => Ok(Dichotomy::Correlated),
            (false, Some(p)) => Ok(Dichotomy::NegligibleAt(p)),
            (true, Some(p)) => Err(Error::Verification(format!("correlated and negligible at direction {p}"))),
            (false, None) => Err(Error::Verification("neither correlated nor negligible in any direction".into())),
        }
    }

    /// The first pair in (Strong_2(V) enumeration order, node order of
    /// `D(root)`) that is strongly `θ`-correlated.
    pub fn find_strongly_correlated(&self, theta: &Rat, cfg: &SearchConfig) -> Result<Option<CorrelationPair>> {
        if self.height() < 2 {
            return Ok(None);
        }
        let mut meter = Meter::new("correlated-pair search", cfg.budget);
        for f in enumerate_strong(&self.shape, 2, None)? {
            let n0 = f.levels[0];
            let root = f.level_tuples(&self.shape, 0)[0];
            let l0 = self.level_map[n0];
            for i in self.sets[n0][root].ones() {
                meter.tick()?;
                let w = self.w_node((l0, i));
                if self.is_strongly_correlated(&f, &w, theta)?.holds {
                    return Ok(Some(CorrelationPair { f, w }));
                }
            }
        }
        Ok(None)
    }

    pub fn to_json(&self) -> LevelSelectionJson {
        let mut assignments = Vec::new();
        for (n, level) in self.sets.iter().enumerate() {
            let l = self.level_map[n];
            for (flat, s) in level.iter().enumerate() {
                assignments.push(Assignment {
                    tuple: self.index.tuple(n, flat),
                    nodes: s.ones().map(|i| self.w_node((l, i))).collect(),
                });
            }
        }
        LevelSelectionJson {
            format: default_format(),
            vector_tree: self.index.to_json(),
            ambient: self.ambient.to_json(),
            level_map: self.level_map.clone(),
            assignments,
        }
    }

    pub fn from_json_value(j: &LevelSelectionJson) -> Result<Self> {
        check_format(&j.format)?;
        let index = VectorTree::from_json(&j.vector_tree)?;
        let ambient = HomTree::from_json(&j.ambient)?;
        let shape = Shape::of(&index);
        if j.level_map.len() != index.height() || j.level_map.iter().any(|&l| l >= ambient.height()) {
            return Err(Error::Parse("level map does not fit the index and ambient trees".into()));
        }
        let mut sets: Vec<Vec<Option<FixedBitSet>>> =
            (0..index.height()).map(|n| vec![None; shape.level_product_size(n)]).collect();
        for a in &j.assignments {
            let (n, flat) = index.tuple_position(&a.tuple)?;
            let l = j.level_map[n];
            let mut s = FixedBitSet::with_capacity(ambient.level_size(l));
            for w in &a.nodes {
                match ambient.position(w) {
                    Some((wl, i)) if wl == l => s.insert(i),
                    _ => return Err(Error::Parse(format!("node {w} of D{} is not in W({l})", a.tuple))),
                }
            }
            if sets[n][flat].replace(s).is_some() {
                return Err(Error::Parse(format!("tuple {} is assigned twice", a.tuple)));
            }
        }
        let sets = sets
            .into_iter()
            .enumerate()
            .map(|(n, level)| {
                level
                    .into_iter()
                    .enumerate()
                    .map(|(f, s)| s.ok_or_else(|| Error::Parse(format!("tuple {} is unassigned", index.tuple(n, f)))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(index, ambient, j.level_map.clone(), sets)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_json_value(&serde_json::from_str(s)?)
    }
}

/// The fiber densities of `D_F` above each immediate successor of `w`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationCertificate {
    pub holds: bool,
    /// Whether `w ∈ D(root of F)`.
    pub member: bool,
    #[serde(with = "serde_rat::vec")]
    pub fiber_densities: Vec<Rat>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dichotomy {
    Correlated,
    NegligibleAt(u32),
}

/// A height-2 subtree `F` of the index tree (in its positions) and a node `w` of `W`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrelationPair {
    pub f: VectorStrongWitness,
    pub w: Node,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationPairJson {
    #[serde(rename = "F")]
    pub f: WitnessJson,
    pub w: Node,
}

impl CorrelationPair {
    pub fn to_json(&self, index: &VectorTree) -> CorrelationPairJson {
        CorrelationPairJson { f: self.f.to_json(index), w: self.w.clone() }
    }
}

/// A real threshold given by a closed expression, with a cached enclosure.
#[derive(Clone, Debug, PartialEq)]
pub struct Threshold {
    expr: ParamExpr,
    enclosure: IntervalValue,
}

fn enclosure_at(expr: &ParamExpr, bits: u32) -> Result<IntervalValue> {
    match evaluate(expr, &StubProvider::default(), Mode::Interval(bits))? {
        Value::Interval(iv) => Ok(iv),
        Value::Exact(x) => Ok(IntervalValue::point(x, bits)),
        Value::Log2(_) => Err(Error::NotExact(expr.to_string())),
    }
}

impl Threshold {
    pub fn exact(x: Rat) -> Self {
        let enclosure = IntervalValue::point(x.clone(), DEFAULT_BITS);
        Threshold { expr: ParamExpr::lit(x), enclosure }
    }

    pub fn real(expr: ParamExpr) -> Result<Self> {
        let enclosure = with_auto_precision(DEFAULT_BITS, |bits| enclosure_at(&expr, bits))?;
        Ok(Threshold { expr, enclosure })
    }

    pub fn expr(&self) -> &ParamExpr {
        &self.expr
    }

    pub fn enclosure(&self) -> &IntervalValue {
        &self.enclosure
    }

    pub fn as_exact(&self) -> Option<&Rat> {
        self.enclosure.as_point()
    }

    /// The enclosure at `bits`.
    pub fn at(&self, bits: u32) -> Result<IntervalValue> {
        match self.as_exact() {
            Some(x) => Ok(IntervalValue::point(x.clone(), bits)),
            None if bits == self.enclosure.bits() => Ok(self.enclosure.clone()),
            None => enclosure_at(&self.expr, bits),
        }
    }

    /// `self ≤ x`, refining the enclosure when it straddles `x`.
    pub fn le(&self, x: &Rat) -> Result<bool> {
        let pt = IntervalValue::point(x.clone(), self.enclosure.bits());
        if let Some(v) = self.enclosure.le(&pt) {
            return Ok(v);
        }
        with_auto_precision(self.enclosure.bits() * 2, |bits| {
            enclosure_at(&self.expr, bits)?
                .le(&IntervalValue::point(x.clone(), bits))
                .ok_or_else(|| Error::Undecidable { bits, what: format!("{} ≤ {x}", self.expr) })
        })
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.enclosure)
    }
}

impl From<Rat> for Threshold {
    fn from(x: Rat) -> Self {
        Threshold::exact(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn binary(height: usize, w_height: usize, level_map: Vec<usize>) -> (VectorTree, HomTree, Vec<usize>) {
        (VectorTree::full(&[2], height).unwrap(), HomTree::full(2, w_height).unwrap(), level_map)
    }

    fn witness(levels: Vec<usize>, parts: Vec<Vec<usize>>) -> VectorStrongWitness {
        VectorStrongWitness { levels, parts: vec![parts] }
    }

    #[test]
    fn density_minimum() {
        let (v, w, l) = binary(2, 3, vec![1, 2]);
        let full = LevelSelection::full(v.clone(), w.clone(), l.clone()).unwrap();
        assert_eq!(full.density_of(), rat(1, 1));
        let empty = LevelSelection::from_fn(v.clone(), w.clone(), l.clone(), |n, f, _| !(n == 1 && f == 0)).unwrap();
        assert_eq!(empty.density_of(), rat(0, 1));
        let mixed = LevelSelection::from_fn(v, w, l, |n, _, i| if n == 0 { i == 0 } else { i < 3 }).unwrap();
        assert_eq!(mixed.density_of(), rat(1, 2));
    }

    #[test]
    fn full_selection_is_correlated() {
        let (v, w, l) = binary(2, 3, vec![0, 1]);
        let d = LevelSelection::full(v, w, l).unwrap();
        let f = witness(vec![0, 1], vec![vec![0], vec![0, 1]]);
        let cert = d.is_strongly_correlated(&f, &Node::root(), &rat(1, 1)).unwrap();
        assert!(cert.holds);
        assert_eq!(d.dichotomy_check(&f, &Node::root(), &rat(1, 1)).unwrap(), Dichotomy::Correlated);
        let pair = d.find_strongly_correlated(&rat(1, 1), &SearchConfig::default()).unwrap().unwrap();
        assert_eq!(pair.f, f);
        assert_eq!(pair.w, Node::root());
    }

    #[test]
    fn empty_intersection_is_negligible() {
        let (v, w, l) = binary(2, 3, vec![0, 2]);
        let d = LevelSelection::from_fn(v, w, l, |n, f, i| n == 0 || (f == 0) == (i < 2)).unwrap();
        let f = witness(vec![0, 1], vec![vec![0], vec![0, 1]]);
        let cert = d.is_strongly_correlated(&f, &Node::root(), &rat(1, 100)).unwrap();
        assert!(cert.member && !cert.holds);
        assert_eq!(d.dichotomy_check(&f, &Node::root(), &rat(1, 100)).unwrap(), Dichotomy::NegligibleAt(0));
        assert!(d.is_negligible(1, &[0, 1], &Node::root(), &rat(1, 100)).unwrap());
        assert!(d.find_strongly_correlated(&rat(1, 100), &SearchConfig::default()).unwrap().is_none());
    }

    #[test]
    fn negligibility_is_strict() {
        let (v, w, l) = binary(2, 3, vec![0, 2]);
        let d = LevelSelection::from_fn(v, w, l, |_, _, i| i % 2 == 0).unwrap();
        assert!(!d.is_negligible(1, &[0], &Node::root(), &rat(1, 2)).unwrap());
        assert!(d.is_negligible(1, &[0], &Node::root(), &rat(3, 5)).unwrap());
        assert!(d.is_negligible(1, &[], &Node::root(), &rat(1, 2)).is_err());
        let deep = Node::parse("00").unwrap();
        assert!(d.is_strongly_negligible(1, &[0], &deep, &rat(1, 2)).is_err());
    }

    #[test]
    fn denseness() {
        let (v, w, l) = binary(2, 3, vec![1, 2]);
        let d = LevelSelection::from_fn(v, w, l, |n, _, i| n == 0 || i != 3).unwrap();
        let s = VectorStrongWitness::full(d.shape());
        assert!(d.is_dense(&Node::root(), &s, &rat(3, 4).into()).unwrap());
        assert!(!d.is_dense(&Node::root(), &s, &rat(1, 1).into()).unwrap());
        assert!(!d.is_strongly_dense(&Node::root(), &s, &rat(3, 4).into()).unwrap());
        assert!(d.is_strongly_dense(&Node::root(), &s, &rat(1, 2).into()).unwrap());
        let real = Threshold::real(ParamExpr::lit(rat(1, 2)).sqrt()).unwrap();
        assert!(d.is_dense(&Node::root(), &s, &real).unwrap());
        let top = Node::parse("00").unwrap();
        assert!(d.is_dense(&top, &s, &rat(1, 2).into()).is_err());
    }

    #[test]
    fn json_round_trip() {
        let (v, w, l) = binary(2, 3, vec![0, 2]);
        let d = LevelSelection::from_fn(v, w, l, |n, f, i| (n + f + i) % 3 != 0).unwrap();
        let text = serde_json::to_string(&d.to_json()).unwrap();
        assert_eq!(LevelSelection::from_json(&text).unwrap(), d);
        let mut j = d.to_json();
        j.assignments.pop();
        assert!(LevelSelection::from_json_value(&j).is_err());
    }
}
