//! Recursion models and the synchronous Markov chain `R^(k)` on a graph.

mod analysis;
mod models;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DiGraph, VertexMark};
use crate::law::{InitialLaw, ScalarLaw};
use crate::metrics::EmpiricalDist;
use crate::seed::{Seed, Stream};

pub use analysis::{
    contraction_precondition, coupled_contraction_run, coupled_run_from, edge_matrix_summary, graph_moment_bound,
    lipschitz_audit, EdgeMatrixSummary, LipschitzAudit,
};
pub use models::{
    model_cascade, model_degroot, model_pagerank, model_voter, Cascade, DeGroot, DeGrootForm, ModelSpec, PageRank,
    Param, Voter, KNOWN_MODELS,
};

/// The maps `Phi` and `g` together with the Lipschitz data of one dynamics.
///
/// `phi` receives the neighbor values `v_j = g(R_j, X_j)` and one edge noise
/// per neighbor, in in-edge slot order.
pub trait Dynamics: Send + Sync {
    fn name(&self) -> &str;
    fn phi(&self, x: &VertexMark, zeta: f64, v: &[f64], xi: &[f64]) -> f64;
    fn g(&self, r: f64, x: &VertexMark) -> f64;
    fn sigma_minus(&self, x: &VertexMark) -> f64;
    fn sigma_plus(&self, x: &VertexMark) -> f64;
    fn beta(&self, x: &VertexMark) -> f64;

    /// Attribute names every mark must carry.
    fn required_attrs(&self) -> Vec<String> {
        Vec::new()
    }

    fn state_domain(&self) -> StateDomain {
        StateDomain::Real
    }
}

/// Values a state coordinate can take; used to draw audit inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateDomain {
    Real,
    Binary,
}

/// Holder constants `(H, Q, alpha, gamma)` for mark perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Holder {
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub alpha: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BoundMode {
    /// `||C||_p <= k` and `||C^(0)||_p <= k0`; `None` means the norm is
    /// graph dependent and has to be measured.
    MatrixNorm { k: Option<f64>, k0: Option<f64> },
    /// States started in `[-k, k]` stay there.
    BoundedSupport { k: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub p: f64,
    pub bound_mode: BoundMode,
    pub holder: Option<Holder>,
}

/// A dynamics with its noise laws and declared constants.
#[derive(Clone)]
pub struct RecursionModel {
    dynamics: Arc<dyn Dynamics>,
    zeta_law: ScalarLaw,
    xi_law: ScalarLaw,
    constants: Constants,
}

impl fmt::Debug for RecursionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RecursionModel")
            .field("name", &self.name())
            .field("zeta_law", &self.zeta_law)
            .field("xi_law", &self.xi_law)
            .field("constants", &self.constants)
            .finish()
    }
}

impl RecursionModel {
    pub fn new(
        dynamics: Arc<dyn Dynamics>,
        zeta_law: ScalarLaw,
        xi_law: ScalarLaw,
        constants: Constants,
    ) -> Result<Self> {
        zeta_law.validate()?;
        xi_law.validate()?;
        if !(constants.p >= 1.0 && constants.p.is_finite()) {
            return Err(Error::InvalidParameter(format!("p must be a finite value >= 1, got {}", constants.p)));
        }
        Ok(RecursionModel { dynamics, zeta_law, xi_law, constants })
    }

    pub fn name(&self) -> &str {
        self.dynamics.name()
    }

    pub fn dynamics(&self) -> &Arc<dyn Dynamics> {
        &self.dynamics
    }

    pub fn zeta_law(&self) -> &ScalarLaw {
        &self.zeta_law
    }

    pub fn xi_law(&self) -> &ScalarLaw {
        &self.xi_law
    }

    pub fn constants(&self) -> &Constants {
        &self.constants
    }

    pub fn p(&self) -> f64 {
        self.constants.p
    }

    pub fn with_holder(mut self, holder: Holder) -> Self {
        self.constants.holder = Some(holder);
        self
    }

    pub fn phi(&self, x: &VertexMark, zeta: f64, v: &[f64], xi: &[f64]) -> f64 {
        self.dynamics.phi(x, zeta, v, xi)
    }

    pub fn g(&self, r: f64, x: &VertexMark) -> f64 {
        self.dynamics.g(r, x)
    }

    /// `Psi = g o Phi`.
    pub fn psi(&self, x: &VertexMark, zeta: f64, v: &[f64], xi: &[f64]) -> f64 {
        self.g(self.phi(x, zeta, v, xi), x)
    }

    pub fn sigma_minus(&self, x: &VertexMark) -> f64 {
        self.dynamics.sigma_minus(x)
    }

    pub fn sigma_plus(&self, x: &VertexMark) -> f64 {
        self.dynamics.sigma_plus(x)
    }

    pub fn beta(&self, x: &VertexMark) -> f64 {
        self.dynamics.beta(x)
    }

    /// Fails on the first mark missing a required attribute.
    pub fn check_marks<'a>(&self, marks: impl IntoIterator<Item = &'a VertexMark>) -> Result<()> {
        let required = self.dynamics.required_attrs();
        if required.is_empty() {
            return Ok(());
        }
        for (i, m) in marks.into_iter().enumerate() {
            if let Some(name) = required.iter().find(|a| m.attr.get(a).is_none()) {
                return Err(Error::MissingAttribute { vertex: i, name: name.clone() });
            }
        }
        Ok(())
    }

    /// A vertex noise draw; point-mass laws consume no randomness.
    pub(crate) fn draw_zeta<R: Rng>(&self, rng: impl FnOnce() -> R) -> f64 {
        match self.zeta_law.point_mass() {
            Some(z) => z,
            None => self.zeta_law.sample(&mut rng()),
        }
    }

    /// Fills `out` with `len` edge noises.
    pub(crate) fn draw_xi<R: Rng>(&self, len: usize, out: &mut Vec<f64>, rng: impl FnOnce() -> R) {
        out.clear();
        match self.xi_law.point_mass() {
            Some(x) => out.resize(len, x),
            None => {
                let mut rng = rng();
                out.extend((0..len).map(|_| self.xi_law.sample(&mut rng)));
            }
        }
    }
}

/// The state `(R^(k), V^(k))` of the chain after `k` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphState {
    pub k: usize,
    pub r: Vec<f64>,
    pub v: Vec<f64>,
}

impl GraphState {
    /// Wraps an explicit `R` vector and computes `V = g(R, X)`.
    pub fn from_r(g: &DiGraph, model: &RecursionModel, k: usize, r: Vec<f64>) -> Result<Self> {
        if r.len() != g.n() {
            return Err(Error::DimensionMismatch { expected: g.n(), found: r.len() });
        }
        let v = r.iter().zip(g.marks()).map(|(&ri, x)| model.g(ri, x)).collect();
        Ok(GraphState { k, r, v })
    }
}

/// Draws `R^(0)` from `init`: coordinate `i` uses its own `(Initial, i)` stream.
pub fn initial_state(g: &DiGraph, model: &RecursionModel, init: &InitialLaw, seed: Seed) -> Result<GraphState> {
    model.check_marks(g.marks())?;
    let r = match init {
        InitialLaw::Vector(v) => v.clone(),
        InitialLaw::Iid(law) => {
            law.validate()?;
            match law.point_mass() {
                Some(x) => vec![x; g.n()],
                None => (0..g.n()).map(|i| law.sample(&mut seed.rng(Stream::Initial, &[i as u64]))).collect(),
            }
        }
    };
    GraphState::from_r(g, model, 0, r)
}

/// One synchronous update. Noise for vertex `i` at step `k` comes from the
/// `(VertexNoise, k, i)` and `(EdgeNoise, k, i)` streams, the latter drawn in
/// in-edge slot order.
pub fn step(g: &DiGraph, model: &RecursionModel, s: &GraphState, seed: Seed) -> Result<GraphState> {
    let n = g.n();
    if s.r.len() != n || s.v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: s.r.len().max(s.v.len()) });
    }
    let k = s.k as u64;
    let r: Vec<f64> = (0..n)
        .into_par_iter()
        .with_min_len(256)
        .map_init(
            || (Vec::new(), Vec::new()),
            |(vals, xi), i| {
                let tails = g.in_neighbors(i);
                vals.clear();
                vals.extend(tails.iter().map(|&j| s.v[j]));
                model.draw_xi(tails.len(), xi, || seed.rng(Stream::EdgeNoise, &[k, i as u64]));
                let zeta = model.draw_zeta(|| seed.rng(Stream::VertexNoise, &[k, i as u64]));
                model.phi(g.mark(i), zeta, vals, xi)
            },
        )
        .collect();
    if let Some(i) = r.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteVertex { vertex: i, step: s.k + 1 });
    }
    let v: Vec<f64> = r.par_iter().zip(g.marks().par_iter()).map(|(&ri, x)| model.g(ri, x)).collect();
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteVertex { vertex: i, step: s.k + 1 });
    }
    Ok(GraphState { k: s.k + 1, r, v })
}

/// Runs `k` steps from `start`, returning `k + 1` states.
pub fn iterate_from(
    g: &DiGraph,
    model: &RecursionModel,
    start: GraphState,
    k: usize,
    seed: Seed,
) -> Result<Vec<GraphState>> {
    let mut traj = Vec::with_capacity(k + 1);
    traj.push(start);
    for _ in 0..k {
        let next = step(g, model, traj.last().expect("nonempty"), seed)?;
        traj.push(next);
    }
    Ok(traj)
}

/// Draws `R^(0)` and runs `k` steps with the same master seed.
pub fn iterate(
    g: &DiGraph,
    model: &RecursionModel,
    init: &InitialLaw,
    k: usize,
    seed: Seed,
) -> Result<Vec<GraphState>> {
    let start = initial_state(g, model, init, seed)?;
    iterate_from(g, model, start, k, seed)
}

/// Which vertices enter an empirical marginal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VertexSample {
    All,
    /// `m` vertices drawn uniformly with replacement.
    Uniform {
        m: usize,
        seed: Seed,
    },
}

/// The empirical law of `R^(k)` across vertices.
pub fn marginal_at(traj: &[GraphState], k: usize, sample: VertexSample) -> Result<EmpiricalDist> {
    let state = traj
        .iter()
        .find(|s| s.k == k)
        .ok_or_else(|| Error::InvalidParameter(format!("step {k} is not in the trajectory")))?;
    match sample {
        VertexSample::All => EmpiricalDist::from_samples(&state.r),
        VertexSample::Uniform { m, seed } => {
            let n = state.r.len();
            if n == 0 || m == 0 {
                return Err(Error::InsufficientData("cannot subsample an empty state".into()));
            }
            let mut rng = seed.rng(Stream::Sampling, &[k as u64]);
            let xs: Vec<f64> = (0..m).map(|_| state.r[rng.random_range(0..n)]).collect();
            EmpiricalDist::from_samples(&xs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_dcm, Attributes, DegreeSequence, GraphMode};
    use proptest::prelude::*;

    fn two_cycle(q: [f64; 2]) -> DiGraph {
        let marks = q.iter().map(|&qi| VertexMark::new(0, 0).with_attr(Attributes::new().with("q", qi))).collect();
        DiGraph::from_edges(2, &[(0, 1), (1, 0)], Some(marks), GraphMode::Raw).unwrap()
    }

    #[test]
    fn pagerank_one_step_by_hand() {
        // q_i = 1/2 with n = 2 gives n q_i = 1.
        let g = two_cycle([1.0, 1.0]);
        let m = model_pagerank(0.5, Param::attr("q")).unwrap();
        let traj = iterate(&g, &m, &InitialLaw::default(), 1, Seed(0)).unwrap();
        assert_eq!(traj[1].r, vec![0.5, 0.5]);
        assert_eq!(traj[1].v, vec![0.25, 0.25]);
    }

    #[test]
    fn degroot_full_damping_ignores_neighbors() {
        let g = two_cycle([0.3, -0.7]);
        let m = model_degroot(1.0, DeGrootForm::FriedkinJohnsen, Param::attr("q"), ScalarLaw::default(), 1.0).unwrap();
        let init = InitialLaw::Vector(vec![5.0, 9.0]);
        let traj = iterate(&g, &m, &init, 2, Seed(0)).unwrap();
        assert_eq!(traj[1].r, vec![0.3, -0.7]);
    }

    #[test]
    fn unanimous_majority() {
        let g = DiGraph::from_edges(4, &[(1, 0), (2, 0), (3, 0)], None, GraphMode::Raw).unwrap();
        let m = model_voter(0.0, 1.0).unwrap();
        let s = GraphState::from_r(&g, &m, 0, vec![0.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(step(&g, &m, &s, Seed(3)).unwrap().r[0], 1.0);
    }

    #[test]
    fn regular_pagerank_closed_form() {
        let seq = DegreeSequence::constant(300, 3, 3).unwrap();
        let g = generate_dcm(&seq, GraphMode::Raw, Seed(1)).unwrap();
        let c = 0.35;
        let m = model_pagerank(c, Param::Value(1.0)).unwrap();
        let traj = iterate(&g, &m, &InitialLaw::default(), 20, Seed(2)).unwrap();
        for s in &traj {
            let want = 1.0 - c.powi(s.k as i32);
            assert!(s.r.iter().all(|x| (x - want).abs() < 1e-12));
        }
        let mu = marginal_at(&traj, 4, VertexSample::All).unwrap();
        assert_eq!(mu.len(), 1);
        assert!((mu.atoms()[0].0 - (1.0 - c.powi(4))).abs() < 1e-12);
    }

    #[test]
    fn zero_steps() {
        let g = two_cycle([1.0, 1.0]);
        let m = model_pagerank(0.5, Param::Value(1.0)).unwrap();
        let traj = iterate(&g, &m, &InitialLaw::Vector(vec![0.0, 1.0]), 0, Seed(0)).unwrap();
        assert_eq!(traj.len(), 1);
        let mu = marginal_at(&traj, 0, VertexSample::All).unwrap();
        assert_eq!(mu.atoms(), &[(0.0, 0.5), (1.0, 0.5)]);
        assert!(marginal_at(&traj, 1, VertexSample::All).is_err());
    }

    #[test]
    fn dimension_and_attribute_errors() {
        let g = two_cycle([1.0, 1.0]);
        let m = model_pagerank(0.5, Param::Value(1.0)).unwrap();
        assert!(matches!(
            iterate(&g, &m, &InitialLaw::Vector(vec![0.0]), 1, Seed(0)),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
        let bare = DiGraph::from_edges(2, &[(0, 1)], None, GraphMode::Raw).unwrap();
        let needs_q = model_pagerank(0.5, Param::attr("q")).unwrap();
        assert!(matches!(
            iterate(&bare, &needs_q, &InitialLaw::default(), 1, Seed(0)),
            Err(Error::MissingAttribute { vertex: 0, .. })
        ));
    }

    #[test]
    fn non_finite_names_vertex_and_step() {
        let g = DiGraph::from_edges(3, &[(0, 1), (1, 2)], None, GraphMode::Raw).unwrap();
        let m = model_pagerank(0.5, Param::Value(1.0)).unwrap();
        let s = GraphState::from_r(&g, &m, 4, vec![f64::INFINITY, 0.0, 0.0]).unwrap();
        assert!(matches!(step(&g, &m, &s, Seed(0)), Err(Error::NonFiniteVertex { vertex: 1, step: 5 })));
    }

    #[test]
    fn noisy_runs_are_reproducible() {
        let seq = DegreeSequence::constant(200, 2, 2).unwrap();
        let g = generate_dcm(&seq, GraphMode::Raw, Seed(7)).unwrap();
        let m = model_degroot(
            0.4,
            DeGrootForm::Shock,
            Param::Value(0.0),
            ScalarLaw::Normal { mean: 0.0, std_dev: 1.0 },
            2.0,
        )
        .unwrap();
        let init = InitialLaw::Iid(ScalarLaw::Uniform { low: -1.0, high: 1.0 });
        let a = iterate(&g, &m, &init, 5, Seed(11)).unwrap();
        let b = iterate(&g, &m, &init, 5, Seed(11)).unwrap();
        assert_eq!(a, b);
        let c = iterate(&g, &m, &init, 5, Seed(12)).unwrap();
        assert_ne!(a[5].r, c[5].r);
    }

    #[test]
    fn uniform_subsample() {
        let g = two_cycle([1.0, 1.0]);
        let m = model_pagerank(0.5, Param::Value(1.0)).unwrap();
        let traj = iterate(&g, &m, &InitialLaw::Vector(vec![0.0, 1.0]), 0, Seed(0)).unwrap();
        let mu = marginal_at(&traj, 0, VertexSample::Uniform { m: 4000, seed: Seed(1) }).unwrap();
        assert!((mu.mean() - 0.5).abs() < 0.05);
    }

    fn random_graph(n: usize, edges: Vec<(usize, usize)>, attrs: Vec<(f64, f64, f64)>) -> DiGraph {
        let marks = attrs
            .into_iter()
            .map(|(q, v, b)| VertexMark::new(0, 0).with_attr(Attributes::new().with("q", q).with("v", v).with("b", b)))
            .collect();
        let edges: Vec<_> = edges.into_iter().map(|(a, b)| (a % n, b % n)).collect();
        DiGraph::from_edges(n, &edges, Some(marks), GraphMode::Raw).unwrap()
    }

    proptest! {
        #[test]
        fn cascade_is_monotone_from_zero(
            edges in proptest::collection::vec((0usize..5, 0usize..5), 0..15),
            attrs in proptest::collection::vec((0.0f64..2.0, -1.0f64..2.0, 0.0f64..3.0), 5),
        ) {
            let g = random_graph(5, edges, attrs);
            let m = model_cascade(Param::attr("q"), Param::attr("v"), Param::attr("b")).unwrap();
            let traj = iterate(&g, &m, &InitialLaw::default(), 12, Seed(0)).unwrap();
            for w in traj.windows(2) {
                for (a, b) in w[0].r.iter().zip(&w[1].r) {
                    prop_assert!(b >= a);
                }
            }
        }

        #[test]
        fn voter_states_are_binary(
            edges in proptest::collection::vec((0usize..8, 0usize..8), 0..30),
            eps in 0.0f64..0.5,
            seed in any::<u64>(),
        ) {
            let g = DiGraph::from_edges(8, &edges, None, GraphMode::Raw).unwrap();
            let m = model_voter(eps, 1.0).unwrap();
            let traj = iterate(&g, &m, &InitialLaw::Iid(ScalarLaw::Bernoulli { p: 0.5 }), 6, Seed(seed)).unwrap();
            for s in &traj {
                prop_assert!(s.r.iter().all(|&x| x == 0.0 || x == 1.0));
            }
        }
    }
}
