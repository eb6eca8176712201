use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GWTreeSpec;
use crate::error::{Error, Result};
use crate::law::{InitialLaw, ScalarLaw};
use crate::metrics::{contraction_estimate, wasserstein_p, EmpiricalDist, Estimate};
use crate::recursion::RecursionModel;
use crate::seed::{Seed, Stream};

/// `M` samples standing in for the law of `V^(r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePool {
    pub generation: usize,
    pub values: Vec<f64>,
}

impl SamplePool {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn to_dist(&self) -> Result<EmpiricalDist> {
        EmpiricalDist::from_samples(&self.values)
    }
}

/// Population dynamics driver. Pool `r` sample `m` draws from the
/// `(Pool, r, m)` stream; root sample `m` draws from `(Root, m)` at every
/// iteration, so successive root laws share their random inputs.
pub struct PopulationDynamics<'a> {
    spec: &'a GWTreeSpec,
    model: &'a RecursionModel,
    init: ScalarLaw,
    seed: Seed,
    pool: SamplePool,
}

fn check_pool(values: &[f64], iteration: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinitePool { iteration })
    }
}

impl<'a> PopulationDynamics<'a> {
    /// Draws pool 0 as `g(R^(0), X_1)` with `R^(0)` from `init` and `X_1` from the body law.
    pub fn new(
        spec: &'a GWTreeSpec,
        model: &'a RecursionModel,
        m: usize,
        init: &InitialLaw,
        seed: Seed,
    ) -> Result<Self> {
        if m < 10 {
            return Err(Error::InvalidParameter(format!("pool size must be at least 10, got {m}")));
        }
        spec.validate()?;
        let init = init.scalar()?.clone();
        init.validate()?;
        let values: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut rng = seed.rng(Stream::Pool, &[0, i as u64]);
                let x = spec.sample_body(&mut rng);
                model.g(init.sample(&mut rng), &x)
            })
            .collect();
        check_pool(&values, 0)?;
        Ok(PopulationDynamics { spec, model, init, seed, pool: SamplePool { generation: 0, values } })
    }

    pub fn pool(&self) -> &SamplePool {
        &self.pool
    }

    pub fn m(&self) -> usize {
        self.pool.values.len()
    }

    /// Applies `rule` (`Psi` or `Phi`) at a node with mark law `body` or
    /// root law, to neighbors drawn with replacement from the current pool.
    fn apply(&self, stream: Stream, keys: &[u64], root: bool) -> f64 {
        let mut rng = self.seed.rng(stream, keys);
        let x = if root { self.spec.sample_root(&mut rng) } else { self.spec.sample_body(&mut rng) };
        let m = self.pool.values.len();
        let v: Vec<f64> = (0..x.d_minus).map(|_| self.pool.values[rng.random_range(0..m)]).collect();
        let mut xi = Vec::new();
        self.model.draw_xi(v.len(), &mut xi, || &mut rng);
        let zeta = self.model.draw_zeta(|| &mut rng);
        if root {
            self.model.phi(&x, zeta, &v, &xi)
        } else {
            self.model.psi(&x, zeta, &v, &xi)
        }
    }

    /// Replaces pool `r` with pool `r + 1`.
    pub fn advance(&mut self) -> Result<&SamplePool> {
        let r = self.pool.generation as u64 + 1;
        let values: Vec<f64> =
            (0..self.m()).into_par_iter().map(|i| self.apply(Stream::Pool, &[r, i as u64], false)).collect();
        check_pool(&values, r as usize)?;
        self.pool = SamplePool { generation: r as usize, values };
        Ok(&self.pool)
    }

    /// `nu_{r+1}`: `M` root applications of `Phi` to the current pool `r`.
    pub fn root_sample(&self) -> Result<EmpiricalDist> {
        let values: Vec<f64> =
            (0..self.m()).into_par_iter().map(|i| self.apply(Stream::Root, &[i as u64], true)).collect();
        check_pool(&values, self.pool.generation + 1)?;
        EmpiricalDist::from_samples(&values)
    }

    /// `nu_0`: `M` draws of the initial law.
    pub fn initial_sample(&self) -> Result<EmpiricalDist> {
        let values: Vec<f64> =
            (0..self.m()).map(|i| self.init.sample(&mut self.seed.rng(Stream::Root, &[i as u64]))).collect();
        EmpiricalDist::from_samples(&values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationOutput {
    /// Pools `0..=k`; the last one approximates `eta_k`.
    pub pools: Vec<SamplePool>,
    /// Approximation of `nu_k`.
    pub nu: EmpiricalDist,
}

impl PopulationOutput {
    pub fn eta(&self) -> &SamplePool {
        self.pools.last().expect("at least pool 0")
    }
}

pub fn population_dynamics(
    spec: &GWTreeSpec,
    model: &RecursionModel,
    m: usize,
    k: usize,
    init: &InitialLaw,
    seed: Seed,
) -> Result<PopulationOutput> {
    let mut pd = PopulationDynamics::new(spec, model, m, init, seed)?;
    let mut pools = vec![pd.pool().clone()];
    let mut nu = pd.initial_sample()?;
    for r in 0..k {
        if r + 1 == k {
            nu = pd.root_sample()?;
        }
        pools.push(pd.advance()?.clone());
    }
    Ok(PopulationOutput { pools, nu })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    pub m: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Length of the windows compared by the non-contraction check.
    pub window: usize,
    /// Body draws used to estimate the contraction constant.
    pub estimate_draws: usize,
    /// Iterate even when the estimated constant is not below one.
    pub force: bool,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions { m: 10_000, tol: 1e-3, max_iter: 100, window: 5, estimate_draws: 10_000, force: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub nu: EmpiricalDist,
    /// `d_p(nu_k, nu_{k+1})` for `k = 1, 2, ...`.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub c_hat: Estimate,
    pub warnings: Vec<String>,
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Iterates population dynamics from `init` until three consecutive
/// distances fall below `tol`, a distance is exactly zero, or `max_iter`
/// distances have been computed.
///
/// Refuses to start unless the estimated contraction constant is below one
/// by three standard errors or `force` is set, and fails with the trace attached when the
/// median distance over the last window is no smaller than over the window
/// before it while still above `tol`.
pub fn fixed_point_solve(
    spec: &GWTreeSpec,
    model: &RecursionModel,
    init: &InitialLaw,
    opts: FixedPointOptions,
    seed: Seed,
) -> Result<FixedPointResult> {
    let c_hat = contraction_estimate(spec, model, opts.estimate_draws.max(100), seed)?;
    let mut warnings = Vec::new();
    if c_hat.value + 3.0 * c_hat.stderr >= 1.0 {
        if !opts.force {
            return Err(Error::NotContracting { c_hat: c_hat.value, stderr: c_hat.stderr });
        }
        warnings.push(format!(
            "estimated contraction constant {:.4} (stderr {:.2e}) is not clearly below 1; iterating on request",
            c_hat.value, c_hat.stderr
        ));
    }
    let p = model.p();
    let w = opts.window.max(1);
    let mut pd = PopulationDynamics::new(spec, model, opts.m, init, seed)?;
    let mut prev = pd.root_sample()?;
    let mut trace = Vec::new();
    let mut below = 0;
    let mut converged = false;
    for _ in 0..opts.max_iter {
        pd.advance()?;
        let cur = pd.root_sample()?;
        let d = wasserstein_p(&prev, &cur, p);
        trace.push(d);
        prev = cur;
        if d == 0.0 {
            converged = true;
            break;
        }
        below = if d < opts.tol { below + 1 } else { 0 };
        if below >= 3 {
            converged = true;
            break;
        }
        let n = trace.len();
        if n >= 2 * w {
            let recent = median(&trace[n - w..]);
            if recent >= opts.tol && recent >= median(&trace[n - 2 * w..n - w]) {
                return Err(Error::NoContraction { trace });
            }
        }
    }
    Ok(FixedPointResult { nu: prev, trace, converged, c_hat, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DegreeSequence;
    use crate::graph::{Attributes, VertexMark};
    use crate::law::CountLaw;
    use crate::metrics::log_slope;
    use crate::recursion::{model_cascade, model_pagerank, model_voter, Dynamics, Param, RecursionModel};
    use crate::tree::{spec_from_degree_sequence, MarkLaw};
    use std::sync::Arc;

    #[test]
    fn regular_pagerank_point_masses() {
        let c: f64 = 0.5;
        let spec = GWTreeSpec::regular(2, 2, Attributes::new());
        let m = model_pagerank(c, Param::Value(1.0)).unwrap();
        for k in 0..6 {
            let out = population_dynamics(&spec, &m, 50, k, &InitialLaw::default(), Seed(1)).unwrap();
            assert_eq!(out.nu.len(), 1);
            assert!((out.nu.atoms()[0].0 - (1.0 - c.powi(k as i32))).abs() < 1e-12);
            // eta_k is the law of g(R^(k)) = c R / 2.
            assert!((out.eta().mean() - c / 2.0 * (1.0 - c.powi(k as i32))).abs() < 1e-12);
        }
    }

    #[test]
    fn pool_size_floor() {
        let spec = GWTreeSpec::regular(2, 2, Attributes::new());
        let m = model_pagerank(0.5, Param::Value(1.0)).unwrap();
        assert!(population_dynamics(&spec, &m, 9, 1, &InitialLaw::default(), Seed(1)).is_err());
    }

    struct Constant;
    impl Dynamics for Constant {
        fn name(&self) -> &str {
            "constant"
        }
        fn phi(&self, _: &VertexMark, _: f64, _: &[f64], _: &[f64]) -> f64 {
            3.0
        }
        fn g(&self, r: f64, _: &VertexMark) -> f64 {
            r
        }
        fn sigma_minus(&self, _: &VertexMark) -> f64 {
            0.0
        }
        fn sigma_plus(&self, _: &VertexMark) -> f64 {
            1.0
        }
        fn beta(&self, _: &VertexMark) -> f64 {
            3.0
        }
    }

    fn constant_model() -> RecursionModel {
        let c = crate::recursion::Constants {
            p: 1.0,
            bound_mode: crate::recursion::BoundMode::BoundedSupport { k: 3.0 },
            holder: None,
        };
        RecursionModel::new(Arc::new(Constant), ScalarLaw::default(), ScalarLaw::default(), c).unwrap()
    }

    #[test]
    fn constant_map_converges_at_once() {
        let spec = GWTreeSpec::regular(2, 1, Attributes::new());
        let m = constant_model();
        for k in 1..4 {
            let out = population_dynamics(&spec, &m, 20, k, &InitialLaw::default(), Seed(0)).unwrap();
            assert_eq!(out.nu, EmpiricalDist::point_mass(3.0));
        }
        let fp = fixed_point_solve(
            &spec,
            &m,
            &InitialLaw::default(),
            FixedPointOptions { m: 20, ..Default::default() },
            Seed(0),
        )
        .unwrap();
        assert!(fp.converged);
        assert_eq!(fp.trace, vec![0.0]);
    }

    #[test]
    fn regular_pagerank_fixed_point() {
        let c: f64 = 0.5;
        let spec = GWTreeSpec::regular(2, 2, Attributes::new());
        let m = model_pagerank(c, Param::Value(1.0)).unwrap();
        let tol = 1e-6;
        let opts = FixedPointOptions { m: 100, tol, max_iter: 200, ..Default::default() };
        let fp = fixed_point_solve(&spec, &m, &InitialLaw::default(), opts, Seed(3)).unwrap();
        assert!(fp.converged);
        assert!((fp.c_hat.value - c).abs() < 1e-15 && fp.c_hat.stderr == 0.0);
        assert!((fp.nu.mean() - 1.0).abs() < 1e-5);
        // Distances are c^k (1 - c); three below tol after about log(1/tol)/log(1/c) steps.
        let expected = ((1.0 - c) / tol).ln() / (1.0 / c).ln();
        assert!((fp.trace.len() as f64 - expected).abs() <= 4.0, "{} iterations", fp.trace.len());
        let (slope, _) = log_slope(&fp.trace).unwrap();
        assert!((slope - c.ln()).abs() < 1e-9);
    }

    #[test]
    fn cascade_without_sinks_is_refused() {
        let seq = DegreeSequence::balanced_iid(200, &[1, 2, 3], Seed(0)).unwrap();
        let spec = spec_from_degree_sequence(&seq).unwrap();
        let m = model_cascade(Param::Value(1.0), Param::Value(0.5), Param::Value(1.0)).unwrap();
        let err =
            fixed_point_solve(&spec, &m, &InitialLaw::default(), FixedPointOptions::default(), Seed(0)).unwrap_err();
        match err {
            Error::NotContracting { c_hat, stderr } => assert!((c_hat - 1.0).abs() < 4.0 * stderr, "{c_hat} {stderr}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn forced_non_contraction_reports_trace() {
        // Voter on the 3-regular tree has constant 2 and a persistent noise floor.
        let spec = GWTreeSpec::regular(3, 1, Attributes::new());
        let m = model_voter(0.3, 1.0).unwrap();
        let opts = FixedPointOptions { m: 2000, tol: 1e-9, max_iter: 60, force: true, ..Default::default() };
        match fixed_point_solve(&spec, &m, &InitialLaw::Iid(ScalarLaw::Bernoulli { p: 0.5 }), opts, Seed(5)) {
            Err(Error::NoContraction { trace }) => assert!(trace.len() >= 10),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn results_are_reproducible() {
        let seq = DegreeSequence::balanced_iid(300, &[1, 2, 3], Seed(0)).unwrap();
        let spec = spec_from_degree_sequence(&seq).unwrap();
        let m = model_pagerank(0.5, Param::Value(1.0)).unwrap();
        let a = population_dynamics(&spec, &m, 500, 4, &InitialLaw::default(), Seed(9)).unwrap();
        let b = population_dynamics(&spec, &m, 500, 4, &InitialLaw::default(), Seed(9)).unwrap();
        assert_eq!(a, b);
    }

    /// Permuting the pool before an update leaves the law of the next pool
    /// unchanged; compared across independent seeds at Monte Carlo tolerance.
    #[test]
    fn pool_exchangeability() {
        let body = MarkLaw::Parametric {
            offspring: CountLaw::Atoms { atoms: vec![(1, 1.0), (2, 1.0), (3, 1.0)] },
            d_plus: CountLaw::Atoms { atoms: vec![(1, 1.0), (2, 1.0)] },
            attr: Attributes::new(),
        };
        let spec = GWTreeSpec { root: body.clone(), body, source: crate::tree::SpecSource::Explicit };
        let model = model_pagerank(0.5, Param::Value(1.0)).unwrap();
        let init = InitialLaw::Iid(ScalarLaw::Uniform { low: 0.0, high: 2.0 });
        let m = 20_000;

        let mut plain = PopulationDynamics::new(&spec, &model, m, &init, Seed(1)).unwrap();
        plain.advance().unwrap();
        let plain_next = plain.advance().unwrap().to_dist().unwrap();

        let mut permuted = PopulationDynamics::new(&spec, &model, m, &init, Seed(2)).unwrap();
        permuted.advance().unwrap();
        let mut rng = Seed(3).rng(Stream::Sampling, &[]);
        for i in (1..m).rev() {
            let j = rng.random_range(0..=i);
            permuted.pool.values.swap(i, j);
        }
        let perm_next = permuted.advance().unwrap().to_dist().unwrap();

        // Two-sample W1 at this size and spread sits near 0.005; allow a wide margin.
        let d = wasserstein_p(&plain_next, &perm_next, 1.0);
        assert!(d < 0.02, "W1 = {d}");
    }
}
