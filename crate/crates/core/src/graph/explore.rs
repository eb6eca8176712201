use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DiGraph;
use crate::seed::{Seed, Stream};

/// An Ulam-Harris label: the empty sequence is the root, `(i, j)` is the
/// `j`-th child (1-based) of `i`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub Vec<u32>);

impl Label {
    pub fn root() -> Self {
        Label(Vec::new())
    }

    pub fn child(&self, j: u32) -> Self {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.extend_from_slice(&self.0);
        v.push(j);
        Label(v)
    }

    pub fn generation(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("root");
        }
        for (i, j) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{j}")?;
        }
        Ok(())
    }
}

/// The depth-`k` in-neighborhood of a vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct RootedNeighborhood {
    pub root: usize,
    pub depth: usize,
    /// `layers[r]` holds the distinct vertices with a directed path of
    /// length `r` to the root, in discovery order.
    pub layers: Vec<Vec<usize>>,
    /// Every graph edge `(tail, head)` with both ends among the explored vertices.
    pub edges: Vec<(usize, usize)>,
    pub is_tree: bool,
    /// Label to vertex map, present when `is_tree`.
    pub theta_map: Option<BTreeMap<Label, usize>>,
}

impl RootedNeighborhood {
    pub fn vertex_count(&self) -> usize {
        self.layers.iter().flatten().collect::<HashSet<_>>().len()
    }
}

/// Breadth-first exploration over reversed edges up to `depth`.
pub fn explore_in_neighborhood(g: &DiGraph, root: usize, depth: usize) -> RootedNeighborhood {
    assert!(root < g.n(), "root {root} out of range for a graph on {} vertices", g.n());

    let mut layers = vec![vec![root]];
    for r in 0..depth {
        let mut seen = HashSet::new();
        let next: Vec<usize> =
            layers[r].iter().flat_map(|&v| g.in_neighbors(v).iter().copied()).filter(|&t| seen.insert(t)).collect();
        layers.push(next);
    }

    // Tree walk: each edge slot opens a new node; any revisit breaks tree-ness.
    let mut visited = HashSet::from([root]);
    let mut frontier = vec![(root, Label::root())];
    let mut labels = vec![(Label::root(), root)];
    let mut revisit = false;
    'walk: for _ in 0..depth {
        let mut next = Vec::new();
        for (v, label) in &frontier {
            for (slot, &t) in g.in_neighbors(*v).iter().enumerate() {
                if !visited.insert(t) {
                    revisit = true;
                    break 'walk;
                }
                let child = label.child(slot as u32 + 1);
                labels.push((child.clone(), t));
                next.push((t, child));
            }
        }
        frontier = next;
    }

    let explored: HashSet<usize> = layers.iter().flatten().copied().collect();
    let mut vertices: Vec<usize> = explored.iter().copied().collect();
    vertices.sort_unstable();
    let edges: Vec<(usize, usize)> = vertices
        .iter()
        .flat_map(|&h| g.in_neighbors(h).iter().filter(|t| explored.contains(t)).map(move |&t| (t, h)))
        .collect();

    let is_tree = !revisit && edges.len() + 1 == explored.len();
    RootedNeighborhood { root, depth, layers, edges, is_tree, theta_map: is_tree.then(|| labels.into_iter().collect()) }
}

/// Fraction of `m` uniformly drawn roots (with replacement) whose depth-`k`
/// in-neighborhood is a tree.
pub fn tree_likeness_rate(g: &DiGraph, depth: usize, m: usize, seed: Seed) -> f64 {
    assert!(m >= 1, "sample size must be positive");
    let n = g.n();
    let trees = (0..m)
        .into_par_iter()
        .filter(|&s| {
            let root = seed.rng(Stream::Sampling, &[s as u64]).random_range(0..n);
            explore_in_neighborhood(g, root, depth).is_tree
        })
        .count();
    trees as f64 / m as f64
}
