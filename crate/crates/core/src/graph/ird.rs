use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{attr, Attributes, DiGraph, GraphMode, VertexMark};
use crate::error::{Error, Result};
use crate::seed::{Seed, Stream};

type KernelFn = dyn Fn(usize, (f64, f64), (f64, f64)) -> f64 + Send + Sync;

/// The `phi_n(n, w_i, w_j)` correction in the rank-1 kernel. Weight pairs
/// are passed as `(w_minus, w_plus)` for the tail `i` and the head `j`.
#[derive(Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelAdjust {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    #[serde(skip)]
    Custom(Arc<KernelFn>),
}

impl KernelAdjust {
    pub fn custom(f: impl Fn(usize, (f64, f64), (f64, f64)) -> f64 + Send + Sync + 'static) -> Self {
        KernelAdjust::Custom(Arc::new(f))
    }

    pub fn eval(&self, n: usize, wi: (f64, f64), wj: (f64, f64)) -> f64 {
        match self {
            KernelAdjust::Zero => 0.0,
            KernelAdjust::Constant { value } => *value,
            KernelAdjust::Custom(f) => f(n, wi, wj),
        }
    }
}

impl fmt::Debug for KernelAdjust {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelAdjust::Zero => f.write_str("Zero"),
            KernelAdjust::Constant { value } => write!(f, "Constant({value})"),
            KernelAdjust::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Rank-1 inhomogeneous random digraph parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IrdSpec {
    /// `(w_minus, w_plus)` per vertex.
    pub weights: Vec<(f64, f64)>,
    pub theta: f64,
    #[serde(default)]
    pub kernel_adjust: KernelAdjust,
    /// Extra per-vertex attributes copied into the marks.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attrs: Vec<Attributes>,
}

impl IrdSpec {
    pub fn new(weights: Vec<(f64, f64)>, theta: f64) -> Self {
        IrdSpec { weights, theta, kernel_adjust: KernelAdjust::Zero, attrs: Vec::new() }
    }

    pub fn with_adjust(mut self, adjust: KernelAdjust) -> Self {
        self.kernel_adjust = adjust;
        self
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    /// Checks weights and theta, and samples up to 1000 ordered pairs to
    /// confirm the kernel adjustment never drops below -1.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::InvalidIrdSpec("no vertices".into()));
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(Error::InvalidIrdSpec(format!("theta must be positive, got {}", self.theta)));
        }
        if let Some(i) =
            self.weights.iter().position(|&(a, b)| !(a.is_finite() && b.is_finite() && a >= 0.0 && b >= 0.0))
        {
            return Err(Error::InvalidIrdSpec(format!("weight of vertex {i} is negative or non-finite")));
        }
        if !self.attrs.is_empty() && self.attrs.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.attrs.len() });
        }
        let check = |i: usize, j: usize| -> Result<()> {
            let phi = self.kernel_adjust.eval(n, self.weights[i], self.weights[j]);
            if phi.is_nan() || phi < -1.0 {
                Err(Error::InvalidIrdSpec(format!("kernel adjustment {phi} < -1 at pair ({i}, {j})")))
            } else {
                Ok(())
            }
        };
        if n * n <= 1000 {
            for i in 0..n {
                for j in 0..n {
                    check(i, j)?;
                }
            }
        } else {
            let mut rng = Seed(0).rng(Stream::Sampling, &[n as u64]);
            for _ in 0..1000 {
                check(rng.random_range(0..n), rng.random_range(0..n))?;
            }
        }
        Ok(())
    }

    /// `1 /\ (W_i^+ W_j^- / (theta n)) (1 + phi_n)` for the edge `i -> j`.
    pub fn edge_probability(&self, i: usize, j: usize) -> f64 {
        let n = self.n();
        let (wi, wj) = (self.weights[i], self.weights[j]);
        let base = wi.1 * wj.0 / (self.theta * n as f64);
        (base * (1.0 + self.kernel_adjust.eval(n, wi, wj))).clamp(0.0, 1.0)
    }

    pub fn marks(&self) -> Vec<VertexMark> {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, &(wm, wp))| {
                let mut a = self.attrs.get(i).cloned().unwrap_or_default();
                a.set(attr::W_MINUS, wm);
                a.set(attr::W_PLUS, wp);
                VertexMark::new(0, 0).with_attr(a)
            })
            .collect()
    }
}

/// Samples every ordered pair `i != j` independently.
pub fn generate_ird(spec: &IrdSpec, seed: Seed) -> Result<DiGraph> {
    spec.validate()?;
    let n = spec.n();
    let mut rng = seed.rng(Stream::Graph, &[]);
    let mut in_adj = vec![Vec::new(); n];
    for i in 0..n {
        if spec.weights[i].1 == 0.0 {
            continue;
        }
        for (j, tails) in in_adj.iter_mut().enumerate() {
            if i == j {
                continue;
            }
            let p = spec.edge_probability(i, j);
            if p > 0.0 && rng.random::<f64>() < p {
                tails.push(i);
            }
        }
    }
    DiGraph::from_in_adj(in_adj, spec.marks(), GraphMode::Raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge_set(g: &DiGraph) -> u32 {
        // Bit index for (i, j): 3 * i + j with diagonals unused.
        g.edges().fold(0u32, |acc, (i, j)| acc | (1 << (3 * i + j)))
    }

    #[test]
    fn two_vertex_frequency() {
        let spec = IrdSpec::new(vec![(1.0, 1.0); 2], 1.0);
        let trials = 10_000u64;
        let (mut a, mut b) = (0, 0);
        for s in 0..trials {
            let g = generate_ird(&spec, Seed(s)).unwrap();
            a += g.in_neighbors(1).len();
            b += g.in_neighbors(0).len();
        }
        for count in [a, b] {
            assert!((count as f64 / trials as f64 - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn zero_out_weight_means_no_out_edges() {
        let spec = IrdSpec::new(vec![(2.0, 0.0), (2.0, 2.0), (2.0, 2.0)], 0.5);
        for s in 0..200 {
            let g = generate_ird(&spec, Seed(s)).unwrap();
            assert_eq!(g.mark(0).d_plus, 0);
        }
    }

    #[test]
    fn minus_one_adjustment_empties_the_graph() {
        let spec = IrdSpec::new(vec![(3.0, 3.0); 5], 1.0).with_adjust(KernelAdjust::Constant { value: -1.0 });
        let g = generate_ird(&spec, Seed(9)).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn validation() {
        assert!(IrdSpec::new(vec![(1.0, 1.0)], 0.0).validate().is_err());
        assert!(IrdSpec::new(vec![(-1.0, 1.0)], 1.0).validate().is_err());
        let bad = IrdSpec::new(vec![(1.0, 1.0); 3], 1.0).with_adjust(KernelAdjust::custom(|_, _, wj| -2.0 * wj.0));
        assert!(matches!(bad.validate(), Err(Error::InvalidIrdSpec(_))));
    }

    #[test]
    fn weights_land_in_marks() {
        let spec = IrdSpec::new(vec![(0.5, 1.5), (1.0, 1.0)], 1.0);
        let g = generate_ird(&spec, Seed(1)).unwrap();
        assert_eq!(g.mark(0).attr.get(attr::W_MINUS), Some(0.5));
        assert_eq!(g.mark(0).attr.get(attr::W_PLUS), Some(1.5));
    }

    /// The joint law of the six edge indicators on three vertices must be the
    /// product of the marginals: each of the 64 cells is compared with its
    /// product-form expectation at 3 standard deviations.
    #[test]
    fn edges_are_independent() {
        let spec = IrdSpec::new(vec![(0.6, 1.2), (1.5, 0.9), (0.9, 1.8)], 1.0);
        let slots: Vec<(usize, usize)> =
            (0..3).flat_map(|i| (0..3).filter(move |&j| j != i).map(move |j| (i, j))).collect();
        let probs: Vec<f64> = slots.iter().map(|&(i, j)| spec.edge_probability(i, j)).collect();
        let trials = 200_000u64;
        let mut counts = [0u64; 64];
        for s in 0..trials {
            let bits = edge_set(&generate_ird(&spec, Seed(s)).unwrap());
            let cell = slots
                .iter()
                .enumerate()
                .fold(0usize, |acc, (b, &(i, j))| acc | ((((bits >> (3 * i + j)) & 1) as usize) << b));
            counts[cell] += 1;
        }
        for (cell, &c) in counts.iter().enumerate() {
            let p: f64 =
                probs.iter().enumerate().map(|(b, &q)| if (cell >> b) & 1 == 1 { q } else { 1.0 - q }).product();
            let mean = trials as f64 * p;
            let sd = (trials as f64 * p * (1.0 - p)).sqrt();
            assert!((c as f64 - mean).abs() <= 3.0 * sd, "cell {cell:06b}: {c} vs {mean:.1}");
        }
    }
}
