use crate::error::{Error, Result};
use crate::tree::{HomTree, Node, TupleNode, VectorTree};

/// The level-preserving bijection between two homogeneous trees of equal
/// branching and height that sends `t⌢_T p` to `I(t)⌢_S p`.
///
/// Both trees keep their levels in lexicographic order with children at
/// positions `i*b + p`, so the map is "same level, same position".
#[derive(Clone, Debug)]
pub struct CanonicalIso {
    source: HomTree,
    target: HomTree,
}

impl CanonicalIso {
    pub fn new(source: &HomTree, target: &HomTree) -> Result<Self> {
        if source.branching() != target.branching() || source.height() != target.height() {
            return Err(Error::pre(format!(
                "canonical isomorphism needs equal branching and height, got ({}, {}) and ({}, {})",
                source.branching(),
                source.height(),
                target.branching(),
                target.height()
            )));
        }
        Ok(CanonicalIso {
            source: source.clone(),
            target: target.clone(),
        })
    }

    pub fn source(&self) -> &HomTree {
        &self.source
    }

    pub fn target(&self) -> &HomTree {
        &self.target
    }

    pub fn forward(&self, t: &Node) -> Result<Node> {
        let (n, i) = self
            .source
            .position(t)
            .ok_or_else(|| Error::NotSubset(format!("node {t} is not in the source tree")))?;
        Ok(self.target.node(n, i).clone())
    }

    pub fn inverse(&self, s: &Node) -> Result<Node> {
        let (n, i) = self
            .target
            .position(s)
            .ok_or_else(|| Error::NotSubset(format!("node {s} is not in the target tree")))?;
        Ok(self.source.node(n, i).clone())
    }

    pub fn image(&self, set: &[Node]) -> Result<Vec<Node>> {
        set.iter().map(|t| self.forward(t)).collect()
    }

    /// Every `(t, I(t))` pair, level by level.
    pub fn pairs(&self) -> impl Iterator<Item = (&Node, &Node)> {
        self.source.nodes().zip(self.target.nodes())
    }
}

/// Coordinatewise canonical isomorphism between vector trees.
#[derive(Clone, Debug)]
pub struct VectorIso {
    coords: Vec<CanonicalIso>,
}

impl VectorIso {
    pub fn new(source: &VectorTree, target: &VectorTree) -> Result<Self> {
        if source.dim() != target.dim() {
            return Err(Error::pre("vector trees of different dimension"));
        }
        let coords = source
            .trees()
            .iter()
            .zip(target.trees())
            .map(|(s, t)| CanonicalIso::new(s, t))
            .collect::<Result<_>>()?;
        Ok(VectorIso { coords })
    }

    pub fn coordinate(&self, c: usize) -> &CanonicalIso {
        &self.coords[c]
    }

    pub fn forward(&self, t: &TupleNode) -> Result<TupleNode> {
        self.apply(t, true)
    }

    pub fn inverse(&self, t: &TupleNode) -> Result<TupleNode> {
        self.apply(t, false)
    }

    fn apply(&self, t: &TupleNode, fwd: bool) -> Result<TupleNode> {
        if t.0.len() != self.coords.len() {
            return Err(Error::NotSubset(format!("tuple {t} has the wrong dimension")));
        }
        let mut level = None;
        let mut out = Vec::with_capacity(t.0.len());
        for (iso, x) in self.coords.iter().zip(&t.0) {
            let tree = if fwd { &iso.source } else { &iso.target };
            let (n, _) = tree
                .position(x)
                .ok_or_else(|| Error::NotSubset(format!("tuple {t} is not in the level product")))?;
            if *level.get_or_insert(n) != n {
                return Err(Error::NotSubset(format!("tuple {t} mixes tree levels")));
            }
            out.push(if fwd { iso.forward(x)? } else { iso.inverse(x)? });
        }
        Ok(TupleNode(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strong::check::is_strong_subtree;

    fn n(s: &str) -> Node {
        Node::parse(s).unwrap()
    }

    #[test]
    fn identity_on_itself() {
        let t = HomTree::full(3, 3).unwrap();
        let iso = CanonicalIso::new(&t, &t).unwrap();
        assert!(iso.pairs().all(|(a, b)| a == b));
    }

    #[test]
    fn onto_gapped_tree_rooted_at_zero() {
        let src = HomTree::full(2, 2).unwrap();
        let dst = HomTree::from_nodes(2, vec![n("0"), n("001"), n("010")]).unwrap();
        assert_eq!(dst.level_set(), &[1, 3]);
        let iso = CanonicalIso::new(&src, &dst).unwrap();
        assert_eq!(iso.forward(&Node::root()).unwrap(), n("0"));
        assert_eq!(iso.forward(&n("0")).unwrap(), n("001"));
        assert_eq!(iso.forward(&n("1")).unwrap(), n("010"));
        // The two defining conditions, checked directly.
        for (t, s) in iso.pairs() {
            assert_eq!(src.position(t).unwrap().0, dst.position(s).unwrap().0);
            if src.position(t).unwrap().0 + 1 < src.height() {
                for p in 0..2 {
                    let lhs = iso.forward(&src.directed_immsuc(t, p).unwrap()).unwrap();
                    assert_eq!(lhs, dst.directed_immsuc(s, p).unwrap());
                }
            }
        }
        let img = iso.image(&src.nodes().cloned().collect::<Vec<_>>()).unwrap();
        assert!(is_strong_subtree(&dst, &img).unwrap().is_strong());
    }

    #[test]
    fn mismatches_are_rejected() {
        let a = HomTree::full(2, 3).unwrap();
        assert!(CanonicalIso::new(&a, &HomTree::full(3, 3).unwrap()).is_err());
        assert!(CanonicalIso::new(&a, &HomTree::full(2, 2).unwrap()).is_err());
    }

    #[test]
    fn vector_round_trip() {
        let v = VectorTree::full(&[2, 3], 3).unwrap();
        let u = VectorTree::new(vec![
            HomTree::full(2, 4).unwrap().successor_tree(1, 1),
            HomTree::full(3, 4).unwrap().successor_tree(1, 2),
        ])
        .unwrap();
        let iso = VectorIso::new(&v, &u).unwrap();
        for lvl in 0..3 {
            let src = v.level_product_at(lvl).unwrap();
            let img: std::collections::BTreeSet<_> = src.iter().map(|t| iso.forward(t).unwrap()).collect();
            assert_eq!(img.len(), src.len());
            for t in &src {
                assert_eq!(&iso.inverse(&iso.forward(t).unwrap()).unwrap(), t);
            }
        }
    }
}
