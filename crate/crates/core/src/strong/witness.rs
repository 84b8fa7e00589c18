use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{upow, HomTree, Node, TupleNode, VectorTree};

use super::check::{is_vector_strong_subtree, StrongCheck};

/// Branchings and height of a vector tree: all a search needs to know.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub branching: Vec<u32>,
    pub height: usize,
}

impl Shape {
    pub fn new(branching: Vec<u32>, height: usize) -> Self {
        Shape { branching, height }
    }

    pub fn of(v: &VectorTree) -> Self {
        Shape {
            branching: v.branchings(),
            height: v.height(),
        }
    }

    pub fn dim(&self) -> usize {
        self.branching.len()
    }

    pub fn level_product_size(&self, n: usize) -> usize {
        self.branching.iter().map(|&b| upow(b, n)).product()
    }

    pub fn unflatten(&self, n: usize, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        let mut rest = flat;
        for c in (0..self.dim()).rev() {
            let size = upow(self.branching[c], n);
            idx[c] = rest % size;
            rest /= size;
        }
        idx
    }

    pub fn flatten(&self, n: usize, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.branching)
            .fold(0, |acc, (&i, &b)| acc * upow(b, n) + i)
    }
}

/// A vector strong subtree of a host vector tree, stored by host positions.
///
/// `parts[c][j]` lists the host positions (at host level `levels[j]`) of the
/// `j`-th level of coordinate `c`, in the subtree's own lexicographic order; the
/// children of entry `i` are entries `i*b .. i*b + b` of level `j + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VectorStrongWitness {
    pub levels: Vec<usize>,
    pub parts: Vec<Vec<Vec<usize>>>,
}

impl VectorStrongWitness {
    /// The host itself.
    pub fn full(shape: &Shape) -> Self {
        VectorStrongWitness {
            levels: (0..shape.height).collect(),
            parts: shape
                .branching
                .iter()
                .map(|&b| (0..shape.height).map(|n| (0..upow(b, n)).collect()).collect())
                .collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.levels.len()
    }

    pub fn dim(&self) -> usize {
        self.parts.len()
    }

    /// The witness as a shape of its own (for searching inside it).
    pub fn shape(&self, host: &Shape) -> Shape {
        Shape::new(host.branching.clone(), self.height())
    }

    /// Host flat indices of `⊗S(j)`, in the witness's lexicographic order.
    pub fn level_tuples(&self, host: &Shape, j: usize) -> Vec<usize> {
        let own = self.shape(host);
        let n = self.levels[j];
        (0..own.level_product_size(j))
            .map(|f| {
                let idx: Vec<usize> = own
                    .unflatten(j, f)
                    .iter()
                    .enumerate()
                    .map(|(c, &i)| self.parts[c][j][i])
                    .collect();
                host.flatten(n, &idx)
            })
            .collect()
    }

    /// Host flat indices of every tuple in `⊗S`, level by level.
    pub fn all_tuples(&self, host: &Shape) -> Vec<(usize, usize)> {
        (0..self.height())
            .flat_map(|j| {
                let n = self.levels[j];
                self.level_tuples(host, j).into_iter().map(move |f| (n, f))
            })
            .collect()
    }

    /// Re-expresses a witness found inside `self` (in `self`'s own positions) in host positions.
    pub fn compose(&self, inner: &VectorStrongWitness) -> VectorStrongWitness {
        VectorStrongWitness {
            levels: inner.levels.iter().map(|&j| self.levels[j]).collect(),
            parts: inner
                .parts
                .iter()
                .enumerate()
                .map(|(c, lv)| {
                    lv.iter()
                        .zip(&inner.levels)
                        .map(|(pos, &j)| pos.iter().map(|&i| self.parts[c][j][i]).collect())
                        .collect()
                })
                .collect(),
        }
    }

    /// The initial subtree `S↾n`.
    pub fn restrict(&self, n: usize) -> VectorStrongWitness {
        VectorStrongWitness {
            levels: self.levels[..=n].to_vec(),
            parts: self.parts.iter().map(|lv| lv[..=n].to_vec()).collect(),
        }
    }

    /// `suc_S(z)` for the tuple of own positions `idx` at own level `j`.
    pub fn successor(&self, host: &Shape, j: usize, idx: &[usize]) -> VectorStrongWitness {
        VectorStrongWitness {
            levels: self.levels[j..].to_vec(),
            parts: self
                .parts
                .iter()
                .enumerate()
                .map(|(c, lv)| {
                    (j..self.height())
                        .map(|k| {
                            let w = upow(host.branching[c], k - j);
                            lv[k][idx[c] * w..(idx[c] + 1) * w].to_vec()
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// The node sets of each coordinate.
    pub fn node_sets(&self, host: &VectorTree) -> Vec<Vec<Node>> {
        self.parts
            .iter()
            .enumerate()
            .map(|(c, lv)| {
                lv.iter()
                    .zip(&self.levels)
                    .flat_map(|(pos, &n)| pos.iter().map(move |&i| host.tree(c).node(n, i).clone()))
                    .collect()
            })
            .collect()
    }

    pub fn to_vector_tree(&self, host: &VectorTree) -> VectorTree {
        let trees = self
            .parts
            .iter()
            .enumerate()
            .map(|(c, lv)| {
                let t = host.tree(c);
                let levels = lv
                    .iter()
                    .zip(&self.levels)
                    .map(|(pos, &n)| pos.iter().map(|&i| t.node(n, i).clone()).collect())
                    .collect();
                HomTree::from_sorted_levels(t.branching(), levels)
            })
            .collect();
        VectorTree::new(trees).expect("witness coordinates share a level set")
    }

    /// Tuples of `⊗S(j)` as node tuples.
    pub fn level_product(&self, host: &VectorTree, j: usize) -> Vec<TupleNode> {
        let shape = Shape::of(host);
        self.level_tuples(&shape, j)
            .into_iter()
            .map(|f| host.tuple(self.levels[j], f))
            .collect()
    }

    /// Validates explicit node sets against the host and converts them.
    pub fn from_node_sets(host: &VectorTree, sets: &[Vec<Node>]) -> Result<Self> {
        match is_vector_strong_subtree(host, sets)? {
            StrongCheck::Strong => {}
            StrongCheck::Violation(v) => {
                return Err(Error::InvalidTree(format!("not a vector strong subtree: {v}")))
            }
        }
        let mut levels = Vec::new();
        let mut parts = Vec::new();
        for (c, set) in sets.iter().enumerate() {
            let t = host.tree(c);
            let mut by_level: Vec<(usize, usize)> =
                set.iter().map(|s| t.position(s).unwrap()).collect();
            by_level.sort_unstable();
            by_level.dedup();
            let mut lv: Vec<Vec<usize>> = Vec::new();
            let mut ls = Vec::new();
            for (n, i) in by_level {
                if ls.last() != Some(&n) {
                    ls.push(n);
                    lv.push(Vec::new());
                }
                lv.last_mut().unwrap().push(i);
            }
            levels = ls;
            parts.push(lv);
        }
        Ok(VectorStrongWitness { levels, parts })
    }

    /// Canonical text key: each coordinate's sorted node list.
    pub fn canonical_key(&self, host: &VectorTree) -> String {
        let sets = self.node_sets(host);
        let coords: Vec<String> = sets
            .into_iter()
            .map(|mut s| {
                s.sort();
                let names: Vec<String> = s.iter().map(|n| n.to_string()).collect();
                format!("[{}]", names.join(","))
            })
            .collect();
        coords.join(";")
    }

    pub fn to_json(&self, host: &VectorTree) -> WitnessJson {
        WitnessJson {
            nodes: self.node_sets(host),
            level_set: self.levels.iter().map(|&n| host.level_set()[n]).collect(),
        }
    }
}

/// `{"nodes": [[digits],…]}` per coordinate, plus the ambient level set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessJson {
    pub nodes: Vec<Vec<Node>>,
    #[serde(default)]
    pub level_set: Vec<usize>,
}
