//! Delayed marked Galton-Watson trees, the tree recursion, and population
//! dynamics for the branching fixed-point equation.

mod population;

use std::ops::Range;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{attr, Attributes, DegreeSequence, IrdSpec, Label, VertexMark};
use crate::law::{poisson, CountLaw, InitialLaw};
use crate::recursion::RecursionModel;
use crate::seed::{Seed, Stream};

pub use population::{
    fixed_point_solve, population_dynamics, FixedPointOptions, FixedPointResult, PopulationDynamics, PopulationOutput,
    SamplePool,
};

/// Default cap on the number of nodes in a sampled tree.
pub const DEFAULT_NODE_CAP: usize = 10_000_000;

/// Law of a node's mark. The node's offspring count is always the sampled
/// mark's `d_minus`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum MarkLaw {
    /// Weighted table of marks.
    Atoms {
        atoms: Vec<(VertexMark, f64)>,
        #[serde(skip)]
        cumulative: OnceLock<Vec<f64>>,
    },
    /// Independent in- and out-degree laws with fixed attributes.
    Parametric {
        offspring: CountLaw,
        #[serde(default = "zero_count")]
        d_plus: CountLaw,
        #[serde(default)]
        attr: Attributes,
    },
    /// A vertex drawn from `weights` (uniformly, or proportionally to its
    /// out-weight when `size_biased`), with in-degree
    /// `Poisson(w_minus * lambda_minus)` and out-degree
    /// `Poisson(w_plus * lambda_plus)`, plus one when size-biased.
    MixedPoisson {
        weights: Vec<(f64, f64)>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        attrs: Vec<Attributes>,
        lambda_minus: f64,
        lambda_plus: f64,
        size_biased: bool,
        #[serde(skip)]
        cumulative: OnceLock<Vec<f64>>,
    },
}

fn zero_count() -> CountLaw {
    CountLaw::Constant { value: 0 }
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

/// Index `i` with probability proportional to `cum[i] - cum[i-1]`.
fn pick<R: Rng + ?Sized>(cum: &[f64], rng: &mut R) -> usize {
    let total = *cum.last().expect("nonempty table");
    let u = rng.random::<f64>() * total;
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

impl MarkLaw {
    pub fn atoms(atoms: Vec<(VertexMark, f64)>) -> Self {
        MarkLaw::Atoms { atoms, cumulative: OnceLock::new() }
    }

    /// A single mark with probability one.
    pub fn point(mark: VertexMark) -> Self {
        Self::atoms(vec![(mark, 1.0)])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(format!("mark law: {msg}")));
        match self {
            MarkLaw::Atoms { atoms, .. } => {
                if atoms.is_empty()
                    || atoms.iter().any(|a| !(a.1.is_finite() && a.1 >= 0.0))
                    || atoms.iter().all(|a| a.1 == 0.0)
                {
                    return bad("atom weights must be finite, nonnegative and not all zero");
                }
            }
            MarkLaw::Parametric { offspring, d_plus, .. } => {
                offspring.validate()?;
                d_plus.validate()?;
            }
            MarkLaw::MixedPoisson { weights, attrs, lambda_minus, lambda_plus, size_biased, .. } => {
                if weights.is_empty()
                    || weights.iter().any(|&(a, b)| !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()))
                {
                    return bad("weights must be finite and nonnegative");
                }
                if !attrs.is_empty() && attrs.len() != weights.len() {
                    return Err(Error::DimensionMismatch { expected: weights.len(), found: attrs.len() });
                }
                if !(*lambda_minus >= 0.0 && *lambda_plus >= 0.0) {
                    return bad("Poisson scales must be nonnegative");
                }
                if *size_biased && weights.iter().all(|w| w.1 == 0.0) {
                    return bad("size-biased selection needs a positive out-weight");
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> VertexMark {
        match self {
            MarkLaw::Atoms { atoms, cumulative: cum } => {
                let cum = cum.get_or_init(|| cumulative(atoms.iter().map(|a| a.1)));
                atoms[pick(cum, rng)].0.clone()
            }
            MarkLaw::Parametric { offspring, d_plus, attr } => {
                VertexMark { d_minus: offspring.sample(rng), d_plus: d_plus.sample(rng), attr: attr.clone() }
            }
            MarkLaw::MixedPoisson { weights, attrs, lambda_minus, lambda_plus, size_biased, cumulative: cum } => {
                let cum = cum.get_or_init(|| cumulative(weights.iter().map(|w| if *size_biased { w.1 } else { 1.0 })));
                let i = pick(cum, rng);
                let (wm, wp) = weights[i];
                let d_minus = poisson(wm * lambda_minus, rng);
                let d_plus = poisson(wp * lambda_plus, rng) + usize::from(*size_biased);
                let mut a = attrs.get(i).cloned().unwrap_or_default();
                a.set(attr::W_MINUS, wm);
                a.set(attr::W_PLUS, wp);
                VertexMark { d_minus, d_plus, attr: a }
            }
        }
    }
}

/// Where a tree spec came from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecSource {
    #[default]
    Explicit,
    DcmLimit,
    IrdLimit,
}

/// Root and body laws of a delayed marked Galton-Watson tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GWTreeSpec {
    pub root: MarkLaw,
    pub body: MarkLaw,
    #[serde(default)]
    pub source: SpecSource,
}

impl GWTreeSpec {
    pub fn new(root: MarkLaw, body: MarkLaw) -> Result<Self> {
        let spec = GWTreeSpec { root, body, source: SpecSource::Explicit };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.root.validate()?;
        self.body.validate()
    }

    pub fn sample_root<R: Rng + ?Sized>(&self, rng: &mut R) -> VertexMark {
        self.root.sample(rng)
    }

    pub fn sample_body<R: Rng + ?Sized>(&self, rng: &mut R) -> VertexMark {
        self.body.sample(rng)
    }

    /// Every node has the same degree pair: `(d, d_plus)` for root and body.
    pub fn regular(d: usize, d_plus: usize, attr: Attributes) -> Self {
        let m = VertexMark { d_minus: d, d_plus, attr };
        GWTreeSpec { root: MarkLaw::point(m.clone()), body: MarkLaw::point(m), source: SpecSource::Explicit }
    }
}

/// The local limit of the configuration model on `seq`: the root is a
/// uniform vertex, every other node a vertex chosen proportionally to its
/// out-degree, and offspring counts are in-degrees. Without out-stubs the
/// body law is a point mass at zero offspring.
pub fn spec_from_degree_sequence(seq: &DegreeSequence) -> Result<GWTreeSpec> {
    seq.validate()?;
    let marks = seq.marks();
    let root = MarkLaw::atoms(marks.iter().map(|m| (m.clone(), 1.0)).collect());
    let body = if seq.l_n() == 0 {
        MarkLaw::point(VertexMark::new(0, 0))
    } else {
        MarkLaw::atoms(
            marks
                .into_iter()
                .filter(|m| m.d_plus > 0)
                .map(|m| {
                    let w = m.d_plus as f64;
                    (m, w)
                })
                .collect(),
        )
    };
    Ok(GWTreeSpec { root, body, source: SpecSource::DcmLimit })
}

/// The mixed-Poisson local limit of a rank-1 inhomogeneous digraph. The
/// kernel adjustment is assumed to vanish in the limit and is ignored.
pub fn spec_from_ird(spec: &IrdSpec) -> Result<GWTreeSpec> {
    spec.validate()?;
    let n = spec.n() as f64;
    let sum_minus: f64 = spec.weights.iter().map(|w| w.0).sum();
    let sum_plus: f64 = spec.weights.iter().map(|w| w.1).sum();
    let law = |size_biased| MarkLaw::MixedPoisson {
        weights: spec.weights.clone(),
        attrs: spec.attrs.clone(),
        lambda_minus: sum_plus / (spec.theta * n),
        lambda_plus: sum_minus / (spec.theta * n),
        size_biased,
        cumulative: OnceLock::new(),
    };
    let body = if sum_plus > 0.0 { law(true) } else { MarkLaw::point(VertexMark::new(0, 0)) };
    Ok(GWTreeSpec { root: law(false), body, source: SpecSource::IrdLimit })
}

/// A node of a sampled tree, stored in breadth-first order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub label: Label,
    pub mark: VertexMark,
    /// Index of the first child; children are contiguous.
    pub first_child: usize,
    pub n_children: usize,
}

/// A depth-truncated marked tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedTree {
    pub nodes: Vec<TreeNode>,
    /// Node index range of each generation `0..=depth`.
    pub generations: Vec<Range<usize>>,
}

impl MarkedTree {
    pub fn depth(&self) -> usize {
        self.generations.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn children(&self, i: usize) -> &[TreeNode] {
        let n = &self.nodes[i];
        &self.nodes[n.first_child..n.first_child + n.n_children]
    }

    /// Looks a node up by its Ulam-Harris label.
    pub fn get(&self, label: &Label) -> Option<&TreeNode> {
        let mut i = 0;
        for &j in &label.0 {
            let n = &self.nodes[i];
            if j == 0 || j as usize > n.n_children {
                return None;
            }
            i = n.first_child + j as usize - 1;
        }
        self.nodes.get(i)
    }
}

pub fn sample_tree(spec: &GWTreeSpec, depth: usize, seed: Seed) -> Result<MarkedTree> {
    sample_tree_with_cap(spec, depth, seed, DEFAULT_NODE_CAP)
}

/// Samples generations `0..=depth`; nodes in the last generation keep their
/// marks but get no children.
pub fn sample_tree_with_cap(spec: &GWTreeSpec, depth: usize, seed: Seed, cap: usize) -> Result<MarkedTree> {
    spec.validate()?;
    let mut rng = seed.rng(Stream::Tree, &[]);
    let root = TreeNode { label: Label::root(), mark: spec.sample_root(&mut rng), first_child: 1, n_children: 0 };
    let mut nodes = vec![root];
    let mut generations: Vec<Range<usize>> = Vec::with_capacity(depth + 1);
    generations.push(0..1);
    for _ in 0..depth {
        let current = generations.last().expect("nonempty").clone();
        let start = nodes.len();
        for i in current {
            let count = nodes[i].mark.d_minus;
            if nodes.len() + count > cap {
                return Err(Error::TreeTooLarge { cap });
            }
            nodes[i].first_child = nodes.len();
            nodes[i].n_children = count;
            let parent = nodes[i].label.clone();
            for j in 0..count {
                let mark = spec.sample_body(&mut rng);
                nodes.push(TreeNode { label: parent.child(j as u32 + 1), mark, first_child: 0, n_children: 0 });
            }
        }
        generations.push(start..nodes.len());
    }
    let end = nodes.len();
    for n in &mut nodes[generations.last().expect("nonempty").clone()] {
        n.first_child = end;
    }
    Ok(MarkedTree { nodes, generations })
}

/// `R_root^(k)` for `k = t.depth()`: leaves take `g(R^(0), X)` with `R^(0)`
/// drawn from `init`, inner nodes apply `Psi`, the root applies `Phi`.
pub fn tree_recursion(t: &MarkedTree, model: &RecursionModel, init: &InitialLaw, seed: Seed) -> Result<f64> {
    model.check_marks(t.nodes.iter().map(|n| &n.mark))?;
    let init = init.scalar()?;
    init.validate()?;
    let mut init_rng = seed.rng(Stream::Initial, &[]);
    if t.depth() == 0 {
        return Ok(init.sample(&mut init_rng));
    }
    let mut zeta_rng = seed.rng(Stream::VertexNoise, &[]);
    let mut xi_rng = seed.rng(Stream::EdgeNoise, &[]);
    let mut values = vec![0.0; t.len()];
    let (mut v, mut xi) = (Vec::new(), Vec::new());
    for r in (0..=t.depth()).rev() {
        for i in t.generations[r].clone() {
            let node = &t.nodes[i];
            let value = if r == t.depth() {
                model.g(init.sample(&mut init_rng), &node.mark)
            } else {
                v.clear();
                v.extend_from_slice(&values[node.first_child..node.first_child + node.n_children]);
                model.draw_xi(v.len(), &mut xi, || &mut xi_rng);
                let zeta = model.draw_zeta(|| &mut zeta_rng);
                if r == 0 {
                    model.phi(&node.mark, zeta, &v, &xi)
                } else {
                    model.psi(&node.mark, zeta, &v, &xi)
                }
            };
            if !value.is_finite() {
                return Err(Error::NonFiniteNode { label: node.label.to_string() });
            }
            values[i] = value;
        }
    }
    Ok(values[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::ScalarLaw;
    use crate::recursion::{model_pagerank, model_voter, Param};

    #[test]
    fn regular_sequence_gives_deterministic_laws() {
        let spec = spec_from_degree_sequence(&DegreeSequence::constant(10, 2, 2).unwrap()).unwrap();
        let mut rng = Seed(0).rng(Stream::Sampling, &[]);
        for _ in 0..50 {
            assert_eq!(spec.sample_root(&mut rng).d_minus, 2);
            assert_eq!(spec.sample_body(&mut rng).d_minus, 2);
        }
        let t = sample_tree(&spec, 2, Seed(1)).unwrap();
        assert_eq!(t.len(), 7);
        assert!(t.nodes.iter().all(|n| n.mark.d_minus == 2 && n.mark.d_plus == 2));
    }

    /// With pairs `[(1,0), (0,1)]` only the second vertex owns an out-stub, and
    /// its in-degree is 0.
    #[test]
    fn size_biasing_two_vertices() {
        let spec = spec_from_degree_sequence(&DegreeSequence::new(vec![(1, 0), (0, 1)]).unwrap()).unwrap();
        let mut rng = Seed(3).rng(Stream::Sampling, &[]);
        let trials = 20_000;
        let ones = (0..trials).filter(|_| spec.sample_root(&mut rng).d_minus == 1).count();
        assert!((ones as f64 / trials as f64 - 0.5).abs() < 4.0 * (0.25 / trials as f64).sqrt());
        assert!((0..1000).all(|_| spec.sample_body(&mut rng) == VertexMark::new(0, 1)));
    }

    #[test]
    fn no_out_stubs_means_no_offspring() {
        let spec = spec_from_degree_sequence(&DegreeSequence::new(vec![(0, 0), (0, 0)]).unwrap()).unwrap();
        let mut rng = Seed(3).rng(Stream::Sampling, &[]);
        assert_eq!(spec.sample_body(&mut rng).d_minus, 0);
    }

    #[test]
    fn tree_sizes_and_labels() {
        let leaf = GWTreeSpec::regular(0, 1, Attributes::new());
        assert_eq!(sample_tree(&leaf, 5, Seed(0)).unwrap().len(), 1);
        let binary = GWTreeSpec::regular(2, 1, Attributes::new());
        let t = sample_tree(&binary, 3, Seed(0)).unwrap();
        assert_eq!(t.len(), 15);
        assert_eq!(t.generations, vec![0..1, 1..3, 3..7, 7..15]);
        for r in 0..3 {
            for i in t.generations[r].clone() {
                let kids: Vec<_> = t.children(i).iter().map(|c| c.label.clone()).collect();
                let want: Vec<_> = (1..=2).map(|j| t.nodes[i].label.child(j)).collect();
                assert_eq!(kids, want);
            }
        }
        let lbl = Label(vec![2, 1, 2]);
        assert_eq!(t.get(&lbl).unwrap().label, lbl);
        assert!(t.get(&Label(vec![3])).is_none());
        assert!(t.children(7).is_empty());
    }

    #[test]
    fn node_cap() {
        let spec = GWTreeSpec::regular(3, 1, Attributes::new());
        assert!(matches!(sample_tree_with_cap(&spec, 6, Seed(0), 100), Err(Error::TreeTooLarge { cap: 100 })));
    }

    #[test]
    fn pagerank_on_regular_tree() {
        let c: f64 = 0.5;
        let spec = GWTreeSpec::regular(2, 2, Attributes::new());
        let m = model_pagerank(c, Param::Value(1.0)).unwrap();
        for k in 0..8 {
            let t = sample_tree(&spec, k, Seed(k as u64)).unwrap();
            let r = tree_recursion(&t, &m, &InitialLaw::default(), Seed(1)).unwrap();
            assert!((r - (1.0 - c.powi(k as i32))).abs() < 1e-12);
        }
    }

    #[test]
    fn depth_zero_returns_initial_draw() {
        let t = sample_tree(&GWTreeSpec::regular(2, 2, Attributes::new()), 0, Seed(0)).unwrap();
        let m = model_pagerank(0.5, Param::Value(1.0)).unwrap();
        assert_eq!(tree_recursion(&t, &m, &InitialLaw::Iid(ScalarLaw::constant(4.0)), Seed(0)).unwrap(), 4.0);
    }

    #[test]
    fn voter_unanimity_propagates() {
        let t = sample_tree(&GWTreeSpec::regular(3, 1, Attributes::new()), 4, Seed(0)).unwrap();
        let m = model_voter(0.0, 1.0).unwrap();
        assert_eq!(tree_recursion(&t, &m, &InitialLaw::Iid(ScalarLaw::constant(1.0)), Seed(0)).unwrap(), 1.0);
    }

    struct Blowup;
    impl crate::recursion::Dynamics for Blowup {
        fn name(&self) -> &str {
            "blowup"
        }
        fn phi(&self, _: &VertexMark, _: f64, v: &[f64], _: &[f64]) -> f64 {
            v.iter().sum::<f64>() * 1e300
        }
        fn g(&self, r: f64, _: &VertexMark) -> f64 {
            r
        }
        fn sigma_minus(&self, _: &VertexMark) -> f64 {
            1e300
        }
        fn sigma_plus(&self, _: &VertexMark) -> f64 {
            1.0
        }
        fn beta(&self, _: &VertexMark) -> f64 {
            0.0
        }
    }

    #[test]
    fn non_finite_names_the_node() {
        let t = sample_tree(&GWTreeSpec::regular(1, 1, Attributes::new()), 3, Seed(0)).unwrap();
        let c = crate::recursion::Constants {
            p: 1.0,
            bound_mode: crate::recursion::BoundMode::MatrixNorm { k: None, k0: None },
            holder: None,
        };
        let m =
            RecursionModel::new(std::sync::Arc::new(Blowup), ScalarLaw::default(), ScalarLaw::default(), c).unwrap();
        let err = tree_recursion(&t, &m, &InitialLaw::Iid(ScalarLaw::constant(1e10)), Seed(0)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteNode { ref label } if label == "1.1"), "{err}");
    }

    #[test]
    fn ird_limit_degrees() {
        // Equal weights w: in- and out-degrees are Poisson(w^2 / theta), body
        // out-degrees are shifted by one.
        let spec = spec_from_ird(&IrdSpec::new(vec![(2.0, 2.0); 50], 2.0)).unwrap();
        let mut rng = Seed(4).rng(Stream::Sampling, &[]);
        let m = 40_000;
        let (mut root_in, mut body_out) = (0usize, 0usize);
        for _ in 0..m {
            root_in += spec.sample_root(&mut rng).d_minus;
            body_out += spec.sample_body(&mut rng).d_plus;
        }
        let se = (2.0 / m as f64).sqrt();
        assert!((root_in as f64 / m as f64 - 2.0).abs() < 4.0 * se);
        assert!((body_out as f64 / m as f64 - 3.0).abs() < 4.0 * se);
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = GWTreeSpec {
            root: MarkLaw::Parametric {
                offspring: CountLaw::Poisson { mean: 1.5 },
                d_plus: CountLaw::Constant { value: 1 },
                attr: Attributes::new().with("q", 1.0),
            },
            body: MarkLaw::atoms(vec![(VertexMark::new(2, 1), 1.0), (VertexMark::new(0, 3), 3.0)]),
            source: SpecSource::Explicit,
        };
        let back: GWTreeSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        let mut a = Seed(1).rng(Stream::Sampling, &[]);
        let mut b = Seed(1).rng(Stream::Sampling, &[]);
        for _ in 0..20 {
            assert_eq!(spec.sample_body(&mut a), back.sample_body(&mut b));
        }
    }
}
