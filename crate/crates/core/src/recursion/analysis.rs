use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{initial_state, iterate_from, BoundMode, GraphState, RecursionModel, StateDomain};
use crate::error::{Error, Result};
use crate::graph::{DiGraph, VertexMark};
use crate::law::InitialLaw;
use crate::seed::{Seed, Stream};

/// Induced 1- and infinity-norms of `C` and `C^(0)` on a realized graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeMatrixSummary {
    pub norm1_c: f64,
    pub norminf_c: f64,
    pub norm1_c0: f64,
    pub norminf_c0: f64,
}

fn interpolate(n1: f64, ninf: f64, p: f64) -> f64 {
    if n1 == 0.0 || ninf == 0.0 {
        return 0.0;
    }
    n1.powf(1.0 / p) * ninf.powf(1.0 - 1.0 / p)
}

impl EdgeMatrixSummary {
    /// Riesz-Thorin bound `||C||_1^(1/p) ||C||_inf^(1 - 1/p)`, exact at `p = 1`.
    pub fn interp_bound(&self, p: f64) -> f64 {
        interpolate(self.norm1_c, self.norminf_c, p)
    }

    pub fn interp_bound_c0(&self, p: f64) -> f64 {
        interpolate(self.norm1_c0, self.norminf_c0, p)
    }
}

/// `C_ij = sigma_-(X_i) sigma_+(X_j)` and `C0_ij = sigma_-(X_i) |g(0, X_j)|`
/// summed over the edges `j -> i` (parallel edges add).
pub fn edge_matrix_summary(g: &DiGraph, model: &RecursionModel) -> EdgeMatrixSummary {
    let sm: Vec<f64> = g.marks().iter().map(|x| model.sigma_minus(x)).collect();
    let sp: Vec<f64> = g.marks().iter().map(|x| model.sigma_plus(x).abs()).collect();
    let g0: Vec<f64> = g.marks().iter().map(|x| model.g(0.0, x).abs()).collect();
    let mut col_c = vec![0.0; g.n()];
    let mut col_c0 = vec![0.0; g.n()];
    let mut norminf_c: f64 = 0.0;
    let mut norminf_c0: f64 = 0.0;
    for (i, s) in sm.iter().enumerate() {
        let (mut row_c, mut row_c0) = (0.0, 0.0);
        for &j in g.in_neighbors(i) {
            let (c, c0) = (s.abs() * sp[j], s.abs() * g0[j]);
            row_c += c;
            row_c0 += c0;
            col_c[j] += c;
            col_c0[j] += c0;
        }
        norminf_c = norminf_c.max(row_c);
        norminf_c0 = norminf_c0.max(row_c0);
    }
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    EdgeMatrixSummary { norm1_c: max(&col_c), norminf_c, norm1_c0: max(&col_c0), norminf_c0 }
}

/// The contraction factor that licenses a coupled run: the declared `K` when
/// below 1, otherwise the measured interpolation bound when below 1.
pub fn contraction_precondition(g: &DiGraph, model: &RecursionModel) -> Result<f64> {
    if let BoundMode::MatrixNorm { k: Some(k), .. } = model.constants().bound_mode {
        if k < 1.0 {
            return Ok(k);
        }
    }
    let measured = edge_matrix_summary(g, model).interp_bound(model.p());
    if measured < 1.0 {
        Ok(measured)
    } else {
        Err(Error::NotContracting { c_hat: measured, stderr: 0.0 })
    }
}

/// Two trajectories with independent initial vectors and shared noise.
/// Returns `(1/n ||R^(k) - R~^(k)||_p^p)^(1/p)` for every step `0..=k`.
///
/// Fails with `NotContracting` unless [`contraction_precondition`] holds or
/// `force` is set.
pub fn coupled_contraction_run(
    g: &DiGraph,
    model: &RecursionModel,
    init: &InitialLaw,
    k: usize,
    seed: Seed,
    force: bool,
) -> Result<Vec<f64>> {
    if !force {
        contraction_precondition(g, model)?;
    }
    let a = initial_state(g, model, init, seed.child(1))?;
    let b = initial_state(g, model, init, seed.child(2))?;
    coupled_run_from(g, model, a, b, k, seed)
}

/// As [`coupled_contraction_run`] from two given states, without the precondition.
pub fn coupled_run_from(
    g: &DiGraph,
    model: &RecursionModel,
    a: GraphState,
    b: GraphState,
    k: usize,
    seed: Seed,
) -> Result<Vec<f64>> {
    let p = model.p();
    let ta = iterate_from(g, model, a, k, seed)?;
    let tb = iterate_from(g, model, b, k, seed)?;
    Ok(ta.iter().zip(&tb).map(|(x, y)| lp_distance(&x.r, &y.r, p)).collect())
}

fn lp_distance(x: &[f64], y: &[f64], p: f64) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    if p == 1.0 {
        x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / n
    } else {
        (x.iter().zip(y).map(|(a, b)| (a - b).abs().powf(p)).sum::<f64>() / n).powf(1.0 / p)
    }
}

/// `(1/n ||x_m||_p^p)^(1/p)` for `m = 0..=k`, where `x_0 = r0 e` and
/// `x_m = C x_{m-1} + C^(0) e + beta` dominates `(E|R_i^(m)|^p)^(1/p)` coordinatewise.
pub fn graph_moment_bound(g: &DiGraph, model: &RecursionModel, r0: f64, k: usize) -> Vec<f64> {
    let n = g.n();
    let p = model.p();
    let sm: Vec<f64> = g.marks().iter().map(|x| model.sigma_minus(x).abs()).collect();
    let sp: Vec<f64> = g.marks().iter().map(|x| model.sigma_plus(x).abs()).collect();
    let offset: Vec<f64> = (0..n)
        .map(|i| {
            let c0e: f64 = g.in_neighbors(i).iter().map(|&j| model.g(0.0, g.mark(j)).abs()).sum();
            sm[i] * c0e + model.beta(g.mark(i))
        })
        .collect();
    let mut x = vec![r0; n];
    let mut out = vec![lp_distance(&x, &vec![0.0; n], p)];
    for _ in 0..k {
        x = (0..n).map(|i| sm[i] * g.in_neighbors(i).iter().map(|&j| sp[j] * x[j]).sum::<f64>() + offset[i]).collect();
        out.push(lp_distance(&x, &vec![0.0; n], p));
    }
    out
}

/// Outcome of a randomized check of the declared Lipschitz and growth constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzAudit {
    pub trials: usize,
    /// Trials where `(E|Phi(v) - Phi(v~)|^p)^(1/p) > sigma_- sum |v_j - v~_j|`
    /// beyond three standard errors.
    pub lipschitz_violations: usize,
    /// Trials where `(E|Phi(v)|^p)^(1/p) > sigma_- sum |v_j| + beta` beyond three standard errors.
    pub growth_violations: usize,
    /// Largest observed ratio of the Lipschitz left side to its bound.
    pub max_ratio: f64,
}

impl LipschitzAudit {
    pub fn passed(&self) -> bool {
        self.lipschitz_violations == 0 && self.growth_violations == 0
    }
}

/// Mean of `ys` and the standard error of that mean.
fn mean_se(ys: &[f64]) -> (f64, f64) {
    let n = ys.len() as f64;
    let m = ys.iter().sum::<f64>() / n;
    if ys.len() < 2 {
        return (m, 0.0);
    }
    let var = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Draws `trials` random `(mark, v, v~)` triples, with marks taken uniformly
/// from `marks` and `noise_draws` shared noise draws per triple, and compares
/// the `p`-th moments against the declared constants.
pub fn lipschitz_audit(
    model: &RecursionModel,
    marks: &[VertexMark],
    trials: usize,
    noise_draws: usize,
    seed: Seed,
) -> Result<LipschitzAudit> {
    if marks.is_empty() || trials == 0 || noise_draws == 0 {
        return Err(Error::InvalidParameter("audit needs marks, trials and noise draws".into()));
    }
    model.check_marks(marks)?;
    let p = model.p();
    let domain = model.dynamics().state_domain();
    let outcomes: Vec<(bool, bool, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed.rng(Stream::Sampling, &[t as u64]);
            let x = &marks[rng.random_range(0..marks.len())];
            let d = x.d_minus;
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| match domain {
                StateDomain::Binary => f64::from(rng.random_bool(0.5)),
                StateDomain::Real => rng.random_range(-2.0..2.0),
            };
            let v: Vec<f64> = (0..d).map(|_| draw(&mut rng)).collect();
            let w: Vec<f64> = (0..d).map(|_| draw(&mut rng)).collect();
            let mut xi = Vec::with_capacity(d);
            let mut diffs = Vec::with_capacity(noise_draws);
            let mut sizes = Vec::with_capacity(noise_draws);
            for s in 0..noise_draws {
                let key = [t as u64, s as u64];
                let zeta = model.draw_zeta(|| seed.rng(Stream::VertexNoise, &key));
                model.draw_xi(d, &mut xi, || seed.rng(Stream::EdgeNoise, &key));
                let a = model.phi(x, zeta, &v, &xi);
                let b = model.phi(x, zeta, &w, &xi);
                diffs.push((a - b).abs().powf(p));
                sizes.push(a.abs().powf(p));
            }
            let sm = model.sigma_minus(x);
            let lip_rhs = (sm * v.iter().zip(&w).map(|(a, b)| (a - b).abs()).sum::<f64>()).powf(p);
            let growth_rhs = (sm * v.iter().map(|a| a.abs()).sum::<f64>() + model.beta(x)).powf(p);
            let (dm, dse) = mean_se(&diffs);
            let (gm, gse) = mean_se(&sizes);
            let slack = |rhs: f64| rhs * (1.0 + 1e-9) + 1e-12;
            let ratio = if lip_rhs > 0.0 {
                (dm / lip_rhs).powf(1.0 / p)
            } else if dm > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            (dm - 3.0 * dse > slack(lip_rhs), gm - 3.0 * gse > slack(growth_rhs), ratio)
        })
        .collect();
    Ok(LipschitzAudit {
        trials,
        lipschitz_violations: outcomes.iter().filter(|o| o.0).count(),
        growth_violations: outcomes.iter().filter(|o| o.1).count(),
        max_ratio: outcomes.iter().map(|o| o.2).fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_dcm, Attributes, DegreeSequence, GraphMode};
    use crate::law::ScalarLaw;
    use crate::recursion::{model_cascade, model_degroot, model_pagerank, model_voter, DeGrootForm, Param};

    fn dcm(pairs: Vec<(usize, usize)>, seed: u64) -> DiGraph {
        generate_dcm(&DegreeSequence::new(pairs).unwrap(), GraphMode::Raw, Seed(seed)).unwrap()
    }

    #[test]
    fn pagerank_column_sums() {
        let c = 0.6;
        let g = dcm(vec![(1, 2), (2, 1), (3, 3), (0, 1), (2, 1)], 3);
        let s = edge_matrix_summary(&g, &model_pagerank(c, Param::Value(1.0)).unwrap());
        assert!(s.norm1_c <= c + 1e-15);
        assert_eq!(s.norm1_c0, 0.0);
        // Every vertex with an out-edge has column sum exactly c.
        assert!((s.norm1_c - c).abs() < 1e-15);
    }

    #[test]
    fn cascade_column_sums_are_one() {
        let g = dcm(vec![(1, 1), (2, 2), (1, 1), (2, 2)], 5);
        let m = model_cascade(Param::Value(1.0), Param::Value(0.0), Param::Value(1.0)).unwrap();
        assert!((edge_matrix_summary(&g, &m).norm1_c - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_graph_norms_vanish() {
        let g = DiGraph::from_edges(4, &[], None, GraphMode::Raw).unwrap();
        let s = edge_matrix_summary(&g, &model_pagerank(0.5, Param::Value(1.0)).unwrap());
        assert_eq!((s.norm1_c, s.norminf_c, s.norm1_c0, s.norminf_c0), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(s.interp_bound(2.0), 0.0);
    }

    #[test]
    fn pagerank_distances_contract_by_c() {
        let c = 0.7;
        let seq = DegreeSequence::balanced_iid(400, &[0, 1, 2, 4], Seed(8)).unwrap();
        let g = generate_dcm(&seq, GraphMode::Raw, Seed(9)).unwrap();
        let m = model_pagerank(c, Param::Value(1.0)).unwrap();
        let d = coupled_contraction_run(
            &g,
            &m,
            &InitialLaw::Iid(ScalarLaw::Uniform { low: 0.0, high: 5.0 }),
            25,
            Seed(1),
            false,
        )
        .unwrap();
        assert!(d[0] > 0.0);
        for w in d.windows(2) {
            if w[0] > 0.0 {
                assert!(w[1] / w[0] <= c + 1e-12, "{} / {}", w[1], w[0]);
            }
        }
    }

    #[test]
    fn identical_starts_stay_together() {
        let g = dcm(vec![(2, 2); 50], 1);
        let m = model_degroot(
            0.3,
            DeGrootForm::Shock,
            Param::Value(0.0),
            ScalarLaw::Normal { mean: 0.0, std_dev: 1.0 },
            1.0,
        )
        .unwrap();
        let s = initial_state(&g, &m, &InitialLaw::Iid(ScalarLaw::Uniform { low: 0.0, high: 1.0 }), Seed(3)).unwrap();
        let d = coupled_run_from(&g, &m, s.clone(), s, 6, Seed(4)).unwrap();
        assert!(d.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn full_damping_couples_in_one_step() {
        let g = dcm(vec![(2, 2); 50], 1);
        let m = model_degroot(
            1.0,
            DeGrootForm::Shock,
            Param::Value(0.0),
            ScalarLaw::Normal { mean: 0.0, std_dev: 1.0 },
            1.0,
        )
        .unwrap();
        let d = coupled_contraction_run(
            &g,
            &m,
            &InitialLaw::Iid(ScalarLaw::Uniform { low: 0.0, high: 1.0 }),
            4,
            Seed(2),
            false,
        )
        .unwrap();
        assert!(d[0] > 0.0);
        assert!(d[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cascade_without_sinks_is_refused() {
        let g = dcm(vec![(1, 1); 20], 1);
        let m = model_cascade(Param::Value(1.0), Param::Value(0.0), Param::Value(1.0)).unwrap();
        assert!(matches!(
            coupled_contraction_run(&g, &m, &InitialLaw::default(), 3, Seed(0), false),
            Err(Error::NotContracting { .. })
        ));
        assert!(coupled_contraction_run(&g, &m, &InitialLaw::default(), 3, Seed(0), true).is_ok());
    }

    #[test]
    fn moment_bound_dominates_pagerank() {
        let c = 0.5;
        let seq = DegreeSequence::balanced_iid(500, &[1, 2, 3], Seed(4)).unwrap();
        let g = generate_dcm(&seq, GraphMode::Raw, Seed(5)).unwrap();
        let m = model_pagerank(c, Param::Value(1.0)).unwrap();
        let traj = crate::recursion::iterate(&g, &m, &InitialLaw::default(), 15, Seed(6)).unwrap();
        let bound = graph_moment_bound(&g, &m, 0.0, 15);
        for (s, b) in traj.iter().zip(&bound) {
            let mean = s.r.iter().map(|x| x.abs()).sum::<f64>() / s.r.len() as f64;
            assert!(mean <= b * (1.0 + 1e-12) + 1e-12, "step {}: {mean} > {b}", s.k);
        }
    }

    fn audit_marks() -> Vec<VertexMark> {
        (0..6)
            .flat_map(|dm| (1..4).map(move |dp| VertexMark::new(dm, dp)))
            .map(|m| m.with_attr(Attributes::new().with("q", 0.7).with("v", 0.2).with("b", 1.5)))
            .collect()
    }

    #[test]
    fn builtin_constants_hold_except_voter() {
        let marks = audit_marks();
        let models = [
            model_pagerank(0.5, Param::attr("q")).unwrap(),
            model_cascade(Param::attr("q"), Param::attr("v"), Param::attr("b")).unwrap(),
            model_degroot(0.3, DeGrootForm::FriedkinJohnsen, Param::attr("q"), ScalarLaw::default(), 2.0).unwrap(),
            model_degroot(
                0.3,
                DeGrootForm::Shock,
                Param::Value(0.0),
                ScalarLaw::Normal { mean: 0.5, std_dev: 1.0 },
                2.0,
            )
            .unwrap(),
        ];
        for m in &models {
            let audit = lipschitz_audit(m, &marks, 1000, 64, Seed(1)).unwrap();
            assert!(audit.passed(), "{}: {audit:?}", m.name());
        }
    }

    /// A single changed vote can move the majority of three by a full unit
    /// while the declared bound allows only 2/3. The constant holds only for
    /// in-degrees 1 and 2.
    #[test]
    fn voter_declared_sigma_fails_beyond_in_degree_two() {
        let m = model_voter(0.1, 1.0).unwrap();
        let audit = lipschitz_audit(&m, &[VertexMark::new(3, 1)], 1000, 64, Seed(2)).unwrap();
        assert!(audit.lipschitz_violations > 0);
        assert!((audit.max_ratio - 1.5).abs() < 1e-9);
        assert_eq!(audit.growth_violations, 0);
        let four = lipschitz_audit(&m, &[VertexMark::new(4, 1)], 1000, 64, Seed(2)).unwrap();
        assert!(four.lipschitz_violations > 0);
        let small = lipschitz_audit(&m, &[VertexMark::new(1, 1), VertexMark::new(2, 1)], 1000, 64, Seed(2)).unwrap();
        assert!(small.passed(), "{small:?}");
    }
}
