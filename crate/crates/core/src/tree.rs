//! Homogeneous trees, vector trees and level products.
//!
//! A [`HomTree`] is a strong subtree of `b^{<ℕ}` stored as explicit digit paths.
//! Each level is kept in lexicographic order, so the children of the node at
//! position `i` of level `n` sit at positions `i*b .. i*b + b` of level `n + 1`,
//! in direction order. Searches work with these positions; equality and the
//! ambient order are always the digit-path ones.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::Rat;

pub const FORMAT: &str = "ramsey-trees/v1";

/// A finite digit sequence: a node of `b^{<ℕ}`. Its length is its ambient level.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Node(pub Vec<u32>);

impl Node {
    pub fn root() -> Self {
        Node(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when `self` end-extends `prefix` (or equals it).
    pub fn extends(&self, prefix: &Node) -> bool {
        self.0.starts_with(&prefix.0)
    }

    pub fn child(&self, p: u32) -> Node {
        let mut d = self.0.clone();
        d.push(p);
        Node(d)
    }

    /// The longest common initial segment.
    pub fn meet(&self, other: &Node) -> Node {
        let k = self
            .0
            .iter()
            .zip(&other.0)
            .take_while(|(a, b)| a == b)
            .count();
        Node(self.0[..k].to_vec())
    }

    pub fn parse(s: &str) -> Result<Node> {
        if s.is_empty() || s == "∅" {
            return Ok(Node::root());
        }
        let digits: Option<Vec<u32>> = if s.contains(',') {
            s.split(',').map(|x| x.trim().parse().ok()).collect()
        } else {
            s.chars().map(|c| c.to_digit(10)).collect()
        };
        digits
            .map(Node)
            .ok_or_else(|| Error::Parse(format!("bad node {s:?}")))
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "∅");
        }
        if self.0.iter().all(|&d| d < 10) {
            for d in &self.0 {
                write!(f, "{d}")?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
            write!(f, "{}", parts.join(","))
        }
    }
}

pub(crate) fn upow(b: u32, e: usize) -> usize {
    (b as usize)
        .checked_pow(e as u32)
        .expect("tree level size overflows usize")
}

/// A homogeneous tree: a finite strong subtree of `b^{<ℕ}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HomTree {
    branching: u32,
    level_set: Vec<usize>,
    levels: Vec<Vec<Node>>,
}

fn check_branching(b: u32) -> Result<()> {
    if b < 2 {
        return Err(Error::InvalidTree(format!("branching must be at least 2, got {b}")));
    }
    Ok(())
}

impl HomTree {
    /// The full tree `b^{<h}`.
    pub fn full(b: u32, height: usize) -> Result<Self> {
        check_branching(b)?;
        if height == 0 {
            return Err(Error::InvalidTree("height must be at least 1".into()));
        }
        let mut levels = vec![vec![Node::root()]];
        for n in 1..height {
            let next = levels[n - 1]
                .iter()
                .flat_map(|s| (0..b).map(move |p| s.child(p)))
                .collect();
            levels.push(next);
        }
        Ok(HomTree {
            branching: b,
            level_set: (0..height).collect(),
            levels,
        })
    }

    /// Builds and validates a tree from an arbitrary node set.
    pub fn from_nodes(b: u32, nodes: impl IntoIterator<Item = Node>) -> Result<Self> {
        check_branching(b)?;
        let mut all: Vec<Node> = nodes.into_iter().collect();
        all.sort_by(|x, y| x.len().cmp(&y.len()).then_with(|| x.cmp(y)));
        all.dedup();
        if all.is_empty() {
            return Err(Error::InvalidTree("empty node set".into()));
        }
        let mut level_set = Vec::new();
        let mut levels: Vec<Vec<Node>> = Vec::new();
        for node in all {
            if let Some(&d) = node.0.iter().find(|&&d| d >= b) {
                return Err(Error::InvalidTree(format!(
                    "node {node} has digit {d} not below branching {b}"
                )));
            }
            if level_set.last() != Some(&node.len()) {
                level_set.push(node.len());
                levels.push(Vec::new());
            }
            levels.last_mut().unwrap().push(node);
        }
        let tree = HomTree {
            branching: b,
            level_set,
            levels,
        };
        tree.validate()?;
        Ok(tree)
    }

    /// Assembles a tree from levels already known to be valid and sorted.
    pub(crate) fn from_sorted_levels(b: u32, levels: Vec<Vec<Node>>) -> Self {
        let level_set = levels.iter().map(|l| l[0].len()).collect();
        let t = HomTree {
            branching: b,
            level_set,
            levels,
        };
        debug_assert!(t.validate().is_ok());
        t
    }

    /// Checks uniqueness of the root, level sizes and the successor condition.
    pub fn validate(&self) -> Result<()> {
        check_branching(self.branching)?;
        let b = self.branching as usize;
        if self.levels.is_empty() || self.levels[0].len() != 1 {
            return Err(Error::InvalidTree("not uniquely rooted".into()));
        }
        for (n, level) in self.levels.iter().enumerate() {
            if level.iter().any(|s| s.len() != self.level_set[n]) {
                return Err(Error::InvalidTree(format!(
                    "level {n} is not inside ambient level {}",
                    self.level_set[n]
                )));
            }
            if level.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidTree(format!("level {n} is not strictly sorted")));
            }
            if n == 0 {
                continue;
            }
            if self.level_set[n] <= self.level_set[n - 1] {
                return Err(Error::InvalidTree("level set is not increasing".into()));
            }
            let parents = &self.levels[n - 1];
            if level.len() != b * parents.len() {
                return Err(Error::InvalidTree(format!(
                    "level {n} has {} nodes, expected {}",
                    level.len(),
                    b * parents.len()
                )));
            }
            for (i, s) in parents.iter().enumerate() {
                for p in 0..b {
                    let t = &level[i * b + p];
                    if !t.extends(&s.child(p as u32)) {
                        return Err(Error::InvalidTree(format!(
                            "no unique node of level {n} above {s} in direction {p}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn branching(&self) -> u32 {
        self.branching
    }

    pub fn height(&self) -> usize {
        self.levels.len()
    }

    pub fn level_set(&self) -> &[usize] {
        &self.level_set
    }

    pub fn levels(&self) -> &[Vec<Node>] {
        &self.levels
    }

    pub fn root(&self) -> &Node {
        &self.levels[0][0]
    }

    pub fn level(&self, n: usize) -> Result<&[Node]> {
        self.levels.get(n).map(|l| l.as_slice()).ok_or(Error::Range {
            what: "tree level",
            value: n,
            limit: self.height(),
        })
    }

    pub fn level_size(&self, n: usize) -> usize {
        upow(self.branching, n)
    }

    pub fn node(&self, n: usize, i: usize) -> &Node {
        &self.levels[n][i]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.levels.iter().flatten()
    }

    pub fn node_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// Tree level and position of a node, if it belongs to the tree.
    pub fn position(&self, t: &Node) -> Option<(usize, usize)> {
        let n = self.level_set.binary_search(&t.len()).ok()?;
        let i = self.levels[n].binary_search(t).ok()?;
        Some((n, i))
    }

    pub fn contains(&self, t: &Node) -> bool {
        self.position(t).is_some()
    }

    fn require(&self, t: &Node) -> Result<(usize, usize)> {
        self.position(t)
            .ok_or_else(|| Error::NotSubset(format!("node {t} is not in the tree")))
    }

    /// The unique immediate successor of `t` end-extending `t⌢p`.
    pub fn directed_immsuc(&self, t: &Node, p: u32) -> Result<Node> {
        let (n, i) = self.require(t)?;
        if p >= self.branching {
            return Err(Error::Range {
                what: "direction",
                value: p as usize,
                limit: self.branching as usize,
            });
        }
        if n + 1 >= self.height() {
            return Err(Error::pre(format!("node {t} is maximal")));
        }
        Ok(self.levels[n + 1][i * self.branching as usize + p as usize].clone())
    }

    /// Positions at level `target` of the nodes above position `(n, i)`.
    pub fn fiber(&self, n: usize, i: usize, target: usize) -> Range<usize> {
        debug_assert!(target >= n);
        let w = upow(self.branching, target - n);
        i * w..(i + 1) * w
    }

    /// Position at level `k` of the ancestor of position `(n, i)`.
    pub fn ancestor(&self, n: usize, i: usize, k: usize) -> usize {
        debug_assert!(k <= n);
        i / upow(self.branching, n - k)
    }

    /// The initial subtree `T↾n` (levels `0..=n`).
    pub fn restrict(&self, n: usize) -> Result<HomTree> {
        self.level(n)?;
        Ok(HomTree {
            branching: self.branching,
            level_set: self.level_set[..=n].to_vec(),
            levels: self.levels[..=n].to_vec(),
        })
    }

    /// The subtree of all nodes end-extending position `(n, i)`.
    pub fn successor_tree(&self, n: usize, i: usize) -> HomTree {
        let levels = (n..self.height())
            .map(|k| self.levels[k][self.fiber(n, i, k)].to_vec())
            .collect();
        HomTree {
            branching: self.branching,
            level_set: self.level_set[n..].to_vec(),
            levels,
        }
    }

    fn positions_in_level(&self, f: &[Node], l: usize) -> Result<Vec<usize>> {
        let level = self.level(l)?;
        let mut pos: Vec<usize> = f
            .iter()
            .map(|t| {
                level.binary_search(t).map_err(|_| {
                    Error::NotSubset(format!("node {t} is not in tree level {l}"))
                })
            })
            .collect::<Result<_>>()?;
        pos.sort_unstable();
        pos.dedup();
        Ok(pos)
    }

    /// `|F| / |T(ℓ)|`.
    pub fn dens(&self, f: &[Node], l: usize) -> Result<Rat> {
        let pos = self.positions_in_level(f, l)?;
        Ok(Rat::new(pos.len().into(), self.levels[l].len().into()))
    }

    /// `|F ∩ suc(w)| / |T(ℓ) ∩ suc(w)|`.
    pub fn dens_rel(&self, f: &[Node], l: usize, w: &Node) -> Result<Rat> {
        let pos = self.positions_in_level(f, l)?;
        let (m, i) = self.require(w)?;
        if m > l {
            return Err(Error::pre(format!(
                "node {w} lies above tree level {l}"
            )));
        }
        let fiber = self.fiber(m, i, l);
        let hit = pos.iter().filter(|p| fiber.contains(p)).count();
        Ok(Rat::new(hit.into(), fiber.len().into()))
    }

    pub fn to_json(&self) -> HomTreeJson {
        HomTreeJson {
            format: FORMAT.to_string(),
            branching: self.branching,
            level_set: self.level_set.clone(),
            nodes: self.nodes().cloned().collect(),
        }
    }

    pub fn from_json(j: &HomTreeJson) -> Result<Self> {
        check_format(&j.format)?;
        let t = HomTree::from_nodes(j.branching, j.nodes.iter().cloned())?;
        if t.level_set != j.level_set {
            return Err(Error::InvalidTree(format!(
                "declared level set {:?} differs from the nodes' level set {:?}",
                j.level_set, t.level_set
            )));
        }
        Ok(t)
    }
}

pub(crate) fn check_format(f: &str) -> Result<()> {
    if f != FORMAT {
        return Err(Error::Parse(format!("unsupported format {f:?}, expected {FORMAT:?}")));
    }
    Ok(())
}

pub(crate) fn default_format() -> String {
    FORMAT.to_string()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomTreeJson {
    #[serde(default = "default_format")]
    pub format: String,
    pub branching: u32,
    pub level_set: Vec<usize>,
    pub nodes: Vec<Node>,
}

/// One node per coordinate, all at a common tree level.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TupleNode(pub Vec<Node>);

impl fmt::Display for TupleNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|n| n.to_string()).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// A finite sequence of homogeneous trees with common height and level set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VectorTree {
    trees: Vec<HomTree>,
}

impl VectorTree {
    pub fn new(trees: Vec<HomTree>) -> Result<Self> {
        let first = trees
            .first()
            .ok_or_else(|| Error::InvalidTree("a vector tree needs a coordinate".into()))?;
        for t in &trees[1..] {
            if t.height() != first.height() || t.level_set() != first.level_set() {
                return Err(Error::InvalidTree(
                    "coordinates differ in height or level set".into(),
                ));
            }
        }
        Ok(VectorTree { trees })
    }

    /// `(b_1^{<h}, …, b_d^{<h})`.
    pub fn full(branchings: &[u32], height: usize) -> Result<Self> {
        let trees = branchings
            .iter()
            .map(|&b| HomTree::full(b, height))
            .collect::<Result<_>>()?;
        VectorTree::new(trees)
    }

    pub fn dim(&self) -> usize {
        self.trees.len()
    }

    pub fn height(&self) -> usize {
        self.trees[0].height()
    }

    pub fn branchings(&self) -> Vec<u32> {
        self.trees.iter().map(HomTree::branching).collect()
    }

    pub fn trees(&self) -> &[HomTree] {
        &self.trees
    }

    pub fn tree(&self, c: usize) -> &HomTree {
        &self.trees[c]
    }

    pub fn level_set(&self) -> &[usize] {
        self.trees[0].level_set()
    }

    pub fn restrict(&self, n: usize) -> Result<VectorTree> {
        let trees = self
            .trees
            .iter()
            .map(|t| t.restrict(n))
            .collect::<Result<_>>()?;
        Ok(VectorTree { trees })
    }

    /// `|⊗V(n)| = ∏ b_i^n`.
    pub fn level_product_size(&self, n: usize) -> usize {
        self.trees.iter().map(|t| t.level_size(n)).product()
    }

    /// Coordinate positions of the tuple with flat index `flat` at level `n`.
    /// Flat indices enumerate `⊗V(n)` lexicographically, first coordinate most significant.
    pub fn unflatten(&self, n: usize, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        let mut rest = flat;
        for c in (0..self.dim()).rev() {
            let size = self.trees[c].level_size(n);
            idx[c] = rest % size;
            rest /= size;
        }
        idx
    }

    pub fn flatten(&self, n: usize, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.trees)
            .fold(0, |acc, (&i, t)| acc * t.level_size(n) + i)
    }

    pub fn tuple(&self, n: usize, flat: usize) -> TupleNode {
        TupleNode(
            self.unflatten(n, flat)
                .iter()
                .enumerate()
                .map(|(c, &i)| self.trees[c].node(n, i).clone())
                .collect(),
        )
    }

    /// `⊗V(n)` in lexicographic order.
    pub fn level_product_at(&self, n: usize) -> Result<Vec<TupleNode>> {
        self.trees[0].level(n)?;
        Ok((0..self.level_product_size(n))
            .map(|f| self.tuple(n, f))
            .collect())
    }

    /// Tree level and flat index of a tuple node.
    pub fn tuple_position(&self, t: &TupleNode) -> Result<(usize, usize)> {
        if t.0.len() != self.dim() {
            return Err(Error::NotSubset(format!(
                "tuple {t} has {} parts, expected {}",
                t.0.len(),
                self.dim()
            )));
        }
        let mut level = None;
        let mut idx = Vec::with_capacity(self.dim());
        for (c, node) in t.0.iter().enumerate() {
            let (n, i) = self.trees[c]
                .position(node)
                .ok_or_else(|| Error::NotSubset(format!("tuple {t} is not in the level product")))?;
            if *level.get_or_insert(n) != n {
                return Err(Error::NotSubset(format!("tuple {t} mixes tree levels")));
            }
            idx.push(i);
        }
        let n = level.unwrap();
        Ok((n, self.flatten(n, &idx)))
    }

    pub fn to_json(&self) -> Vec<HomTreeJson> {
        self.trees.iter().map(HomTree::to_json).collect()
    }

    pub fn from_json(v: &[HomTreeJson]) -> Result<Self> {
        VectorTree::new(v.iter().map(HomTree::from_json).collect::<Result<_>>()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn n(s: &str) -> Node {
        Node::parse(s).unwrap()
    }

    fn nodes(v: &[&str]) -> Vec<Node> {
        v.iter().map(|s| n(s)).collect()
    }

    /// The strong subtree of `2^{<ℕ}` with level set {0, 2}.
    fn gapped() -> HomTree {
        HomTree::from_nodes(2, nodes(&["", "01", "10"])).unwrap()
    }

    #[test]
    fn full_tree_levels() {
        let t = HomTree::full(2, 3).unwrap();
        assert_eq!(t.level(2).unwrap(), nodes(&["00", "01", "10", "11"]).as_slice());
        assert_eq!(t.level(0).unwrap(), &[Node::root()]);
        assert!(t.level(3).is_err());
    }

    #[test]
    fn gapped_level_has_ambient_length_two() {
        let t = gapped();
        assert_eq!(t.level_set(), &[0, 2]);
        assert_eq!(t.level(1).unwrap().len(), 2);
        assert!(t.level(1).unwrap().iter().all(|s| s.len() == 2));
    }

    #[test]
    fn directed_successors() {
        let t = HomTree::full(2, 3).unwrap();
        assert_eq!(t.directed_immsuc(&Node::root(), 1).unwrap(), n("1"));
        assert!(t.directed_immsuc(&n("01"), 0).is_err());
        assert!(t.directed_immsuc(&Node::root(), 2).is_err());
        let g = gapped();
        let above = g.directed_immsuc(&Node::root(), 0).unwrap();
        let by_filter: Vec<&Node> = g.level(1).unwrap().iter().filter(|s| s.extends(&n("0"))).collect();
        assert_eq!(by_filter, vec![&above]);
    }

    #[test]
    fn rejects_small_branching_and_bad_node_sets() {
        assert!(HomTree::full(1, 3).is_err());
        assert!(HomTree::from_nodes(2, nodes(&["", "00", "01"])).is_err());
        assert!(HomTree::from_nodes(2, nodes(&["0", "1"])).is_err());
        assert!(HomTree::from_nodes(2, nodes(&["", "0", "2"])).is_err());
        assert!(HomTree::from_nodes(2, nodes(&["", "0", "10"])).is_err());
    }

    #[test]
    fn restriction_heights() {
        let v = VectorTree::full(&[2, 3], 5).unwrap();
        assert_eq!(v.restrict(4).unwrap(), v);
        assert_eq!(v.restrict(0).unwrap().height(), 1);
        for k in 0..5 {
            assert_eq!(v.restrict(k).unwrap().height(), k + 1);
        }
        assert!(v.restrict(5).is_err());
    }

    #[test]
    fn level_products() {
        let v = VectorTree::full(&[2, 2], 2).unwrap();
        assert_eq!(v.level_product_at(1).unwrap().len(), 4);
        assert_eq!(v.level_product_at(0).unwrap().len(), 1);
        let w = VectorTree::full(&[2, 3], 4).unwrap();
        for k in 0..4 {
            assert_eq!(w.level_product_at(k).unwrap().len(), 2usize.pow(k as u32) * 3usize.pow(k as u32));
        }
        let prod = w.level_product_at(2).unwrap();
        assert!(prod.windows(2).all(|p| p[0] < p[1]));
        for (f, t) in prod.iter().enumerate() {
            assert_eq!(w.tuple_position(t).unwrap(), (2, f));
        }
    }

    #[test]
    fn densities() {
        let t = HomTree::full(2, 4).unwrap();
        let lvl3 = t.level(3).unwrap().to_vec();
        assert_eq!(t.dens(&lvl3, 3).unwrap(), rat(1, 1));
        assert_eq!(t.dens(&[], 3).unwrap(), rat(0, 1));
        assert_eq!(t.dens(&lvl3[..3], 3).unwrap(), rat(3, 8));
        assert_eq!(t.dens_rel(&nodes(&["010"]), 3, &n("0")).unwrap(), rat(1, 4));
        assert_eq!(t.dens_rel(&nodes(&["010", "011", "000", "001"]), 3, &n("0")).unwrap(), rat(1, 1));
        assert!(t.dens(&nodes(&["01"]), 3).is_err());
        assert!(t.dens_rel(&nodes(&["01"]), 2, &n("010")).is_err());
    }

    #[test]
    fn json_round_trip() {
        let g = gapped();
        let j = serde_json::to_string(&g.to_json()).unwrap();
        let back: HomTreeJson = serde_json::from_str(&j).unwrap();
        assert_eq!(HomTree::from_json(&back).unwrap(), g);
    }
}
