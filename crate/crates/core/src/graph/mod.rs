//! Directed random graphs: the configuration model, rank-1 inhomogeneous
//! random digraphs, and breadth-first in-neighborhood exploration.

mod dcm;
mod explore;
mod ird;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{Seed, Stream};

pub use dcm::{generate_dcm, generate_dcm_with_cap, DEFAULT_ATTEMPT_CAP};
pub use explore::{explore_in_neighborhood, tree_likeness_rate, Label, RootedNeighborhood};
pub use ird::{generate_ird, IrdSpec, KernelAdjust};

/// Attribute names written by the generators.
pub mod attr {
    pub const ORIG_D_MINUS: &str = "orig_d_minus";
    pub const ORIG_D_PLUS: &str = "orig_d_plus";
    pub const W_MINUS: &str = "w_minus";
    pub const W_PLUS: &str = "w_plus";
}

/// Named real-valued vertex attributes (`q`, `v`, `b`, weights, ...).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Attributes(BTreeMap<String, f64>);

impl Attributes {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.0.insert(name.into(), value);
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for Attributes {
    fn from_iter<T: IntoIterator<Item = (S, f64)>>(iter: T) -> Self {
        Attributes(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

/// The mark `X_i = (D_i^-, D_i^+, a_i)` of a vertex or tree node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VertexMark {
    pub d_minus: usize,
    pub d_plus: usize,
    #[serde(default, skip_serializing_if = "Attributes::is_empty")]
    pub attr: Attributes,
}

impl VertexMark {
    pub fn new(d_minus: usize, d_plus: usize) -> Self {
        VertexMark { d_minus, d_plus, attr: Attributes::new() }
    }

    pub fn with_attr(mut self, attr: Attributes) -> Self {
        self.attr = attr;
        self
    }

    /// Out-degree as seen by a model: realized, or the pre-erasure value when
    /// requested and available.
    pub fn out_degree(&self, source: DegreeSource) -> f64 {
        match source {
            DegreeSource::Realized => self.d_plus as f64,
            DegreeSource::Original => self.attr.get(attr::ORIG_D_PLUS).unwrap_or(self.d_plus as f64),
        }
    }

    pub fn in_degree(&self, source: DegreeSource) -> f64 {
        match source {
            DegreeSource::Realized => self.d_minus as f64,
            DegreeSource::Original => self.attr.get(attr::ORIG_D_MINUS).unwrap_or(self.d_minus as f64),
        }
    }

    /// The metric on marks: `|dd^-| + |dd^+|` plus the l1 distance over the union
    /// of attribute fields (a missing field counts as 0).
    pub fn distance(&self, other: &VertexMark) -> f64 {
        let mut d = self.d_minus.abs_diff(other.d_minus) as f64 + self.d_plus.abs_diff(other.d_plus) as f64;
        for (k, v) in self.attr.iter() {
            d += (v - other.attr.get(k).unwrap_or(0.0)).abs();
        }
        for (k, v) in other.attr.iter() {
            if self.attr.get(k).is_none() {
                d += v.abs();
            }
        }
        d
    }
}

/// Which degrees a model reads on erased graphs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeSource {
    #[default]
    Realized,
    Original,
}

/// Per-vertex `(D^-, D^+)` targets with optional attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeSequence {
    pairs: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    attrs: Vec<Attributes>,
}

impl DegreeSequence {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        Self::with_attrs(pairs, Vec::new())
    }

    /// `attrs` is either empty or one entry per vertex.
    pub fn with_attrs(pairs: Vec<(usize, usize)>, attrs: Vec<Attributes>) -> Result<Self> {
        let seq = DegreeSequence { pairs, attrs };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::EmptySequence);
        }
        if !self.attrs.is_empty() && self.attrs.len() != self.pairs.len() {
            return Err(Error::DimensionMismatch { expected: self.pairs.len(), found: self.attrs.len() });
        }
        let in_sum: usize = self.pairs.iter().map(|p| p.0).sum();
        let out_sum: usize = self.pairs.iter().map(|p| p.1).sum();
        if in_sum != out_sum {
            return Err(Error::DegreeImbalance { in_sum, out_sum });
        }
        Ok(())
    }

    /// All vertices share the same degree pair.
    pub fn constant(n: usize, d_minus: usize, d_plus: usize) -> Result<Self> {
        Self::new(vec![(d_minus, d_plus); n])
    }

    /// In- and out-degrees drawn i.i.d. uniformly from `support`, then nudged
    /// one unit at a time (staying inside the support range) until the two
    /// sums agree.
    pub fn balanced_iid(n: usize, support: &[usize], seed: Seed) -> Result<Self> {
        if n == 0 || support.is_empty() {
            return Err(Error::InvalidParameter("balanced_iid needs n > 0 and a nonempty support".into()));
        }
        let (lo, hi) = (*support.iter().min().unwrap(), *support.iter().max().unwrap());
        let mut rng = seed.rng(Stream::Degrees, &[n as u64]);
        let mut pairs: Vec<(usize, usize)> = (0..n)
            .map(|_| (support[rng.random_range(0..support.len())], support[rng.random_range(0..support.len())]))
            .collect();
        let mut in_sum: isize = pairs.iter().map(|p| p.0 as isize).sum();
        let mut out_sum: isize = pairs.iter().map(|p| p.1 as isize).sum();
        if lo == hi && in_sum != out_sum {
            return Err(Error::InvalidParameter("constant support cannot be rebalanced".into()));
        }
        while in_sum != out_sum {
            let i = rng.random_range(0..n);
            let (d_in, d_out) = &mut pairs[i];
            // Move the larger side down or the smaller side up, whichever is possible.
            let shrink = rng.random_bool(0.5);
            if in_sum > out_sum {
                if shrink && *d_in > lo {
                    *d_in -= 1;
                    in_sum -= 1;
                } else if !shrink && *d_out < hi {
                    *d_out += 1;
                    out_sum += 1;
                }
            } else if shrink && *d_out > lo {
                *d_out -= 1;
                out_sum -= 1;
            } else if !shrink && *d_in < hi {
                *d_in += 1;
                in_sum += 1;
            }
        }
        Self::new(pairs)
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn attrs(&self) -> Option<&[Attributes]> {
        if self.attrs.is_empty() {
            None
        } else {
            Some(&self.attrs)
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Total half-edge count `L_n`.
    pub fn l_n(&self) -> usize {
        self.pairs.iter().map(|p| p.0).sum()
    }

    /// The marks a perfectly realized graph would carry.
    pub fn marks(&self) -> Vec<VertexMark> {
        self.pairs
            .iter()
            .enumerate()
            .map(|(i, &(dm, dp))| VertexMark {
                d_minus: dm,
                d_plus: dp,
                attr: self.attrs.get(i).cloned().unwrap_or_default(),
            })
            .collect()
    }
}

/// Provenance of a generated graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    /// Multigraph exactly as paired.
    Raw,
    /// Pairing redrawn until simple.
    Repeated,
    /// Self-loops and parallel edges removed.
    Erased,
}

/// A realized directed multigraph with vertex marks.
///
/// `in_adj[i]` lists the tails of the edges into `i`, one entry per edge
/// occurrence; its order defines the edge-slot index used for edge noise.
#[derive(Debug, Clone, PartialEq)]
pub struct DiGraph {
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
    marks: Vec<VertexMark>,
    mode: GraphMode,
}

impl DiGraph {
    /// Builds a graph from per-head in-neighbor lists. Marks keep their
    /// attributes while `d_minus`/`d_plus` are overwritten with the realized degrees.
    pub fn from_in_adj(in_adj: Vec<Vec<usize>>, mut marks: Vec<VertexMark>, mode: GraphMode) -> Result<Self> {
        let n = in_adj.len();
        if marks.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: marks.len() });
        }
        let mut out_adj = vec![Vec::new(); n];
        for (head, tails) in in_adj.iter().enumerate() {
            for &tail in tails {
                if tail >= n {
                    return Err(Error::InvalidParameter(format!("edge {tail}->{head} leaves the vertex range")));
                }
                out_adj[tail].push(head);
            }
        }
        for (i, m) in marks.iter_mut().enumerate() {
            m.d_minus = in_adj[i].len();
            m.d_plus = out_adj[i].len();
        }
        Ok(DiGraph { out_adj, in_adj, marks, mode })
    }

    /// Builds a graph from a list of `(tail, head)` edges.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize)],
        marks: Option<Vec<VertexMark>>,
        mode: GraphMode,
    ) -> Result<Self> {
        let mut in_adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidParameter(format!("edge {u}->{v} leaves the vertex range 0..{n}")));
            }
            in_adj[v].push(u);
        }
        let marks = marks.unwrap_or_else(|| vec![VertexMark::default(); n]);
        Self::from_in_adj(in_adj, marks, mode)
    }

    pub fn n(&self) -> usize {
        self.in_adj.len()
    }

    pub fn mode(&self) -> GraphMode {
        self.mode
    }

    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_adj[i]
    }

    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_adj[i]
    }

    pub fn marks(&self) -> &[VertexMark] {
        &self.marks
    }

    pub fn mark(&self, i: usize) -> &VertexMark {
        &self.marks[i]
    }

    pub fn edge_count(&self) -> usize {
        self.in_adj.iter().map(Vec::len).sum()
    }

    /// Edges as `(tail, head)` in head-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.in_adj.iter().enumerate().flat_map(|(h, tails)| tails.iter().map(move |&t| (t, h)))
    }

    pub fn is_simple(&self) -> bool {
        self.in_adj.iter().enumerate().all(|(h, tails)| {
            let mut seen = tails.clone();
            seen.sort_unstable();
            seen.windows(2).all(|w| w[0] != w[1]) && !tails.contains(&h)
        })
    }

    /// The degree sequence realized by this graph, carrying the mark attributes.
    pub fn degree_sequence(&self) -> DegreeSequence {
        DegreeSequence {
            pairs: self.marks.iter().map(|m| (m.d_minus, m.d_plus)).collect(),
            attrs: self.marks.iter().map(|m| m.attr.clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn imbalance_is_rejected() {
        assert!(matches!(
            DegreeSequence::new(vec![(1, 0), (1, 0)]),
            Err(Error::DegreeImbalance { in_sum: 2, out_sum: 0 })
        ));
        assert!(matches!(DegreeSequence::new(vec![]), Err(Error::EmptySequence)));
    }

    #[test]
    fn mark_distance_unions_fields() {
        let a = VertexMark::new(2, 1).with_attr(Attributes::new().with("q", 1.0));
        let b = VertexMark::new(1, 1).with_attr(Attributes::new().with("v", 0.5));
        assert_eq!(a.distance(&b), 1.0 + 1.0 + 0.5);
        assert_eq!(a.distance(&a), 0.0);
    }

    #[test]
    fn adjacency_views_agree() {
        let g = DiGraph::from_edges(3, &[(0, 1), (1, 2), (0, 1), (2, 2)], None, GraphMode::Raw).unwrap();
        assert_eq!(g.in_neighbors(1), &[0, 0]);
        assert_eq!(g.out_neighbors(0), &[1, 1]);
        assert_eq!(g.mark(2).d_minus, 2);
        assert_eq!(g.mark(2).d_plus, 1);
        assert!(!g.is_simple());
        assert_eq!(g.edge_count(), 4);
    }

    proptest! {
        #[test]
        fn balanced_iid_balances(n in 1usize..300, seed in any::<u64>()) {
            let seq = DegreeSequence::balanced_iid(n, &[1, 2, 3], Seed(seed)).unwrap();
            prop_assert_eq!(seq.len(), n);
            prop_assert!(seq.pairs().iter().all(|&(a, b)| (1..=3).contains(&a) && (1..=3).contains(&b)));
        }
    }
}
