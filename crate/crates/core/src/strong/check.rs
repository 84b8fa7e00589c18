use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::tree::{HomTree, Node, VectorTree};

/// Which part of the strong-subtree definition failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Condition {
    /// More than one minimal node.
    UniquelyRooted,
    /// Maximal chains of different lengths.
    Balanced,
    /// A level of the subtree straddles two levels of the host.
    LevelInside,
    /// A host direction with no subtree successor, or with more than one.
    Successor,
    /// Coordinates with different level sets.
    CommonLevelSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub condition: Condition,
    pub node: Node,
    pub direction: Option<u32>,
    pub coordinate: Option<usize>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}", self.condition, self.node)?;
        if let Some(p) = self.direction {
            write!(f, " direction {p}")?;
        }
        if let Some(c) = self.coordinate {
            write!(f, " (coordinate {c})")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StrongCheck {
    Strong,
    Violation(Violation),
}

impl StrongCheck {
    pub fn is_strong(&self) -> bool {
        matches!(self, StrongCheck::Strong)
    }

    fn at(condition: Condition, node: &Node, direction: Option<u32>) -> Self {
        StrongCheck::Violation(Violation {
            condition,
            node: node.clone(),
            direction,
            coordinate: None,
        })
    }
}

/// Decides whether `s` is a strong subtree of `t`, reporting the first violation.
pub fn is_strong_subtree(t: &HomTree, s: &[Node]) -> Result<StrongCheck> {
    if s.is_empty() {
        return Err(Error::pre("empty node set"));
    }
    if let Some(x) = s.iter().find(|x| !t.contains(x)) {
        return Err(Error::NotSubset(format!("node {x} is not in the host tree")));
    }
    let mut nodes = s.to_vec();
    nodes.sort_by(|x, y| x.len().cmp(&y.len()).then_with(|| x.cmp(y)));
    nodes.dedup();
    let members: HashSet<&Node> = nodes.iter().collect();

    // Immediate predecessor inside S and the S-level of each node.
    let mut parent: HashMap<&Node, &Node> = HashMap::new();
    let mut depth: HashMap<&Node, usize> = HashMap::new();
    for x in &nodes {
        let mut d = 0;
        for len in (0..x.len()).rev() {
            let prefix = Node(x.0[..len].to_vec());
            if let Some(&p) = members.get(&prefix) {
                if d == 0 {
                    parent.insert(x, p);
                }
                d += 1;
            }
        }
        depth.insert(x, d);
    }

    let roots: Vec<&Node> = nodes.iter().filter(|x| depth[x] == 0).collect();
    if roots.len() > 1 {
        return Ok(StrongCheck::at(Condition::UniquelyRooted, roots[1], None));
    }

    let height = depth.values().max().copied().unwrap_or(0) + 1;
    let mut by_level: Vec<Vec<&Node>> = vec![Vec::new(); height];
    for x in &nodes {
        by_level[depth[x]].push(x);
    }
    for level in &by_level {
        if let Some(x) = level.iter().find(|x| x.len() != level[0].len()) {
            return Ok(StrongCheck::at(Condition::LevelInside, x, None));
        }
    }

    let mut children: HashMap<&Node, Vec<&Node>> = HashMap::new();
    for (x, p) in &parent {
        children.entry(*p).or_default().push(*x);
    }
    for x in &nodes {
        if depth[x] + 1 < height && !children.contains_key(x) {
            return Ok(StrongCheck::at(Condition::Balanced, x, None));
        }
    }

    for level in &by_level[..height - 1] {
        for x in level {
            let succ = &children[*x];
            let mut counts = Vec::with_capacity(t.branching() as usize);
            for p in 0..t.branching() {
                let dir = t.directed_immsuc(x, p)?;
                counts.push(succ.iter().filter(|y| y.extends(&dir)).count());
            }
            if let Some(p) = counts.iter().position(|&c| c == 0) {
                return Ok(StrongCheck::at(Condition::Successor, x, Some(p as u32)));
            }
            if let Some(p) = counts.iter().position(|&c| c > 1) {
                return Ok(StrongCheck::at(Condition::Successor, x, Some(p as u32)));
            }
        }
    }
    Ok(StrongCheck::Strong)
}

fn ambient_levels(s: &[Node]) -> Vec<usize> {
    let mut l: Vec<usize> = s.iter().map(Node::len).collect();
    l.sort_unstable();
    l.dedup();
    l
}

/// Checks each coordinate and the common level set.
pub fn is_vector_strong_subtree(v: &VectorTree, sets: &[Vec<Node>]) -> Result<StrongCheck> {
    if sets.len() != v.dim() {
        return Err(Error::pre(format!(
            "expected {} coordinates, got {}",
            v.dim(),
            sets.len()
        )));
    }
    for (c, s) in sets.iter().enumerate() {
        if let StrongCheck::Violation(mut viol) = is_strong_subtree(v.tree(c), s)? {
            viol.coordinate = Some(c);
            return Ok(StrongCheck::Violation(viol));
        }
    }
    let first = ambient_levels(&sets[0]);
    for (c, s) in sets.iter().enumerate().skip(1) {
        if ambient_levels(s) != first {
            return Ok(StrongCheck::Violation(Violation {
                condition: Condition::CommonLevelSet,
                node: s.iter().min().cloned().unwrap_or_default(),
                direction: None,
                coordinate: Some(c),
            }));
        }
    }
    Ok(StrongCheck::Strong)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nodes(v: &[&str]) -> Vec<Node> {
        v.iter().map(|s| Node::parse(s).unwrap()).collect()
    }

    #[test]
    fn whole_tree_and_single_nodes_are_strong() {
        let t = HomTree::full(2, 3).unwrap();
        let all: Vec<Node> = t.nodes().cloned().collect();
        assert!(is_strong_subtree(&t, &all).unwrap().is_strong());
        for x in &all {
            assert!(is_strong_subtree(&t, std::slice::from_ref(x)).unwrap().is_strong());
        }
    }

    #[test]
    fn both_successors_over_one_direction() {
        let t = HomTree::full(2, 3).unwrap();
        let r = is_strong_subtree(&t, &nodes(&["", "00", "01"])).unwrap();
        assert_eq!(
            r,
            StrongCheck::Violation(Violation {
                condition: Condition::Successor,
                node: Node::root(),
                direction: Some(1),
                coordinate: None,
            })
        );
    }

    #[test]
    fn other_conditions_are_reported() {
        let t = HomTree::full(2, 4).unwrap();
        let two_roots = is_strong_subtree(&t, &nodes(&["0", "1"])).unwrap();
        assert!(matches!(two_roots, StrongCheck::Violation(Violation { condition: Condition::UniquelyRooted, .. })));
        let straddle = is_strong_subtree(&t, &nodes(&["", "00", "1"])).unwrap();
        assert!(matches!(straddle, StrongCheck::Violation(Violation { condition: Condition::LevelInside, .. })));
        let unbalanced = is_strong_subtree(&t, &nodes(&["", "0", "1", "00", "01"])).unwrap();
        assert!(matches!(unbalanced, StrongCheck::Violation(Violation { condition: Condition::Balanced, .. })));
        assert!(is_strong_subtree(&t, &nodes(&["2"])).is_err());
    }

    #[test]
    fn common_level_set_is_required() {
        let v = VectorTree::full(&[2, 2], 3).unwrap();
        let sets = vec![nodes(&["", "0", "1"]), nodes(&["", "00", "10"])];
        let r = is_vector_strong_subtree(&v, &sets).unwrap();
        assert!(matches!(r, StrongCheck::Violation(Violation { condition: Condition::CommonLevelSet, .. })));
    }
}
