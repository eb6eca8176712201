use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{BoundMode, Constants, Dynamics, Holder, RecursionModel, StateDomain};
use crate::error::{Error, Result};
use crate::graph::{DegreeSource, VertexMark};
use crate::law::ScalarLaw;
use crate::seed::{Seed, Stream};

pub const KNOWN_MODELS: &[&str] = &["degroot", "voter", "pagerank", "cascade"];

/// A scalar model parameter: a constant or a named vertex attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Value(f64),
    Attr { attr: String },
}

impl Param {
    pub fn attr(name: impl Into<String>) -> Self {
        Param::Attr { attr: name.into() }
    }

    /// Missing attributes evaluate to NaN; models check marks before use.
    pub fn eval(&self, x: &VertexMark) -> f64 {
        match self {
            Param::Value(v) => *v,
            Param::Attr { attr } => x.attr.get(attr).unwrap_or(f64::NAN),
        }
    }

    fn attr_name(&self) -> Option<String> {
        match self {
            Param::Value(_) => None,
            Param::Attr { attr } => Some(attr.clone()),
        }
    }
}

fn inv_or_zero(num: f64, d: f64) -> f64 {
    if d > 0.0 {
        num / d
    } else {
        0.0
    }
}

fn required(params: &[&Param]) -> Vec<String> {
    let mut names: Vec<String> = params.iter().filter_map(|p| p.attr_name()).collect();
    names.dedup();
    names
}

/// The choice of `f(q, zeta)` in the damped DeGroot update.
#[derive(Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeGrootForm {
    /// `f = q`
    #[default]
    #[serde(alias = "fj")]
    FriedkinJohnsen,
    /// `f = zeta`
    Shock,
    #[serde(skip)]
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for DeGrootForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeGrootForm::FriedkinJohnsen => f.write_str("FriedkinJohnsen"),
            DeGrootForm::Shock => f.write_str("Shock"),
            DeGrootForm::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// `R_i = c f(q_i, zeta_i) + (1 - c)/D_i^- sum_j R_j`.
pub struct DeGroot {
    pub c: f64,
    pub form: DeGrootForm,
    pub q: Param,
    pub degrees: DegreeSource,
    zeta_law: ScalarLaw,
    p: f64,
    shock_moment: f64,
}

const CUSTOM_F_DRAWS: u64 = 512;

impl DeGroot {
    fn f(&self, x: &VertexMark, zeta: f64) -> f64 {
        match &self.form {
            DeGrootForm::FriedkinJohnsen => self.q.eval(x),
            DeGrootForm::Shock => zeta,
            DeGrootForm::Custom(f) => f(self.q.eval(x), zeta),
        }
    }
}

impl Dynamics for DeGroot {
    fn name(&self) -> &str {
        "degroot"
    }

    fn phi(&self, x: &VertexMark, zeta: f64, v: &[f64], _xi: &[f64]) -> f64 {
        let d = x.in_degree(self.degrees);
        let interaction = if d > 0.0 { (1.0 - self.c) / d * v.iter().sum::<f64>() } else { 0.0 };
        self.c * self.f(x, zeta) + interaction
    }

    fn g(&self, r: f64, _x: &VertexMark) -> f64 {
        r
    }

    fn sigma_minus(&self, x: &VertexMark) -> f64 {
        inv_or_zero(1.0 - self.c, x.in_degree(self.degrees))
    }

    fn sigma_plus(&self, _x: &VertexMark) -> f64 {
        1.0
    }

    /// `c (E|f(q, zeta)|^p)^(1/p)`; a custom `f` is averaged over a fixed
    /// set of noise draws.
    fn beta(&self, x: &VertexMark) -> f64 {
        match &self.form {
            DeGrootForm::FriedkinJohnsen => self.c * self.q.eval(x).abs(),
            DeGrootForm::Shock => self.c * self.shock_moment,
            DeGrootForm::Custom(f) => {
                let q = self.q.eval(x);
                let mut rng = Seed(0).rng(Stream::Moments, &[u64::MAX]);
                let m =
                    (0..CUSTOM_F_DRAWS).map(|_| f(q, self.zeta_law.sample(&mut rng)).abs().powf(self.p)).sum::<f64>()
                        / CUSTOM_F_DRAWS as f64;
                self.c * m.powf(1.0 / self.p)
            }
        }
    }

    fn required_attrs(&self) -> Vec<String> {
        match self.form {
            DeGrootForm::Shock => Vec::new(),
            _ => required(&[&self.q]),
        }
    }
}

/// `R_i = (zeta_i + 1(sum_j R_j >= D_i^- / 2)) mod 2`, with the indicator
/// taken as 0 when `D_i^- = 0`.
pub struct Voter {
    pub epsilon: f64,
    pub degrees: DegreeSource,
    p: f64,
}

impl Dynamics for Voter {
    fn name(&self) -> &str {
        "voter"
    }

    fn phi(&self, x: &VertexMark, zeta: f64, v: &[f64], _xi: &[f64]) -> f64 {
        let d = x.in_degree(self.degrees);
        let majority = d > 0.0 && v.iter().sum::<f64>() >= d / 2.0;
        let flip = zeta != 0.0;
        if majority != flip {
            1.0
        } else {
            0.0
        }
    }

    fn g(&self, r: f64, _x: &VertexMark) -> f64 {
        r
    }

    fn sigma_minus(&self, x: &VertexMark) -> f64 {
        inv_or_zero(2.0, x.in_degree(self.degrees))
    }

    fn sigma_plus(&self, _x: &VertexMark) -> f64 {
        1.0
    }

    fn beta(&self, _x: &VertexMark) -> f64 {
        self.epsilon.powf(1.0 / self.p)
    }

    fn state_domain(&self) -> StateDomain {
        StateDomain::Binary
    }
}

/// `R_i = (1 - c) q_i + sum_j c R_j / D_j^+`, where `q_i` is the
/// personalization already scaled by `n`.
pub struct PageRank {
    pub c: f64,
    pub q: Param,
    pub degrees: DegreeSource,
}

impl Dynamics for PageRank {
    fn name(&self) -> &str {
        "pagerank"
    }

    fn phi(&self, x: &VertexMark, _zeta: f64, v: &[f64], _xi: &[f64]) -> f64 {
        (1.0 - self.c) * self.q.eval(x) + v.iter().sum::<f64>()
    }

    fn g(&self, r: f64, x: &VertexMark) -> f64 {
        inv_or_zero(self.c * r, x.out_degree(self.degrees))
    }

    fn sigma_minus(&self, _x: &VertexMark) -> f64 {
        1.0
    }

    fn sigma_plus(&self, x: &VertexMark) -> f64 {
        inv_or_zero(self.c, x.out_degree(self.degrees))
    }

    fn beta(&self, x: &VertexMark) -> f64 {
        (1.0 - self.c) * self.q.eval(x).abs()
    }

    fn required_attrs(&self) -> Vec<String> {
        required(&[&self.q])
    }
}

/// `R_i = q_i + sum_j ((R_j - v_j)^+ /\ b_j) / D_j^+`.
pub struct Cascade {
    pub q: Param,
    pub v: Param,
    pub b: Param,
    pub degrees: DegreeSource,
}

impl Dynamics for Cascade {
    fn name(&self) -> &str {
        "cascade"
    }

    fn phi(&self, x: &VertexMark, _zeta: f64, v: &[f64], _xi: &[f64]) -> f64 {
        self.q.eval(x) + v.iter().sum::<f64>()
    }

    fn g(&self, r: f64, x: &VertexMark) -> f64 {
        let paid = (r - self.v.eval(x)).max(0.0).min(self.b.eval(x));
        inv_or_zero(paid, x.out_degree(self.degrees))
    }

    fn sigma_minus(&self, _x: &VertexMark) -> f64 {
        1.0
    }

    fn sigma_plus(&self, x: &VertexMark) -> f64 {
        inv_or_zero(1.0, x.out_degree(self.degrees))
    }

    fn beta(&self, x: &VertexMark) -> f64 {
        self.q.eval(x).abs()
    }

    fn required_attrs(&self) -> Vec<String> {
        required(&[&self.q, &self.v, &self.b])
    }
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {x}")))
    }
}

fn check_param(name: &str, p: &Param) -> Result<()> {
    match p {
        Param::Value(v) if v.is_nan() => Err(Error::InvalidParameter(format!("{name} is NaN"))),
        _ => Ok(()),
    }
}

fn constants(p: f64, bound_mode: BoundMode) -> Constants {
    Constants { p, bound_mode, holder: None }
}

pub fn model_degroot(c: f64, form: DeGrootForm, q: Param, zeta: ScalarLaw, p: f64) -> Result<RecursionModel> {
    model_degroot_with(c, form, q, zeta, p, DegreeSource::Realized)
}

fn model_degroot_with(
    c: f64,
    form: DeGrootForm,
    q: Param,
    zeta: ScalarLaw,
    p: f64,
    degrees: DegreeSource,
) -> Result<RecursionModel> {
    check_unit("c", c)?;
    check_param("q", &q)?;
    zeta.validate()?;
    let bound_mode = match (&form, &q) {
        (DeGrootForm::FriedkinJohnsen, Param::Value(v)) => BoundMode::BoundedSupport { k: v.abs() },
        _ => BoundMode::MatrixNorm { k: None, k0: Some(0.0) },
    };
    let dyn_ = DeGroot { c, shock_moment: zeta.abs_moment(p), form, q, degrees, zeta_law: zeta.clone(), p };
    RecursionModel::new(Arc::new(dyn_), zeta, ScalarLaw::default(), constants(p, bound_mode))
}

pub fn model_voter(epsilon: f64, p: f64) -> Result<RecursionModel> {
    model_voter_with(epsilon, p, DegreeSource::Realized)
}

fn model_voter_with(epsilon: f64, p: f64, degrees: DegreeSource) -> Result<RecursionModel> {
    check_unit("epsilon", epsilon)?;
    RecursionModel::new(
        Arc::new(Voter { epsilon, degrees, p }),
        ScalarLaw::Bernoulli { p: epsilon },
        ScalarLaw::default(),
        constants(p, BoundMode::BoundedSupport { k: 1.0 }),
    )
}

pub fn model_pagerank(c: f64, q: Param) -> Result<RecursionModel> {
    model_pagerank_with(c, q, DegreeSource::Realized)
}

fn model_pagerank_with(c: f64, q: Param, degrees: DegreeSource) -> Result<RecursionModel> {
    check_unit("c", c)?;
    check_param("q", &q)?;
    RecursionModel::new(
        Arc::new(PageRank { c, q, degrees }),
        ScalarLaw::default(),
        ScalarLaw::default(),
        constants(1.0, BoundMode::MatrixNorm { k: Some(c), k0: Some(0.0) }),
    )
}

pub fn model_cascade(q: Param, v: Param, b: Param) -> Result<RecursionModel> {
    model_cascade_with(q, v, b, DegreeSource::Realized)
}

fn model_cascade_with(q: Param, v: Param, b: Param, degrees: DegreeSource) -> Result<RecursionModel> {
    for (name, p) in [("q", &q), ("v", &v), ("b", &b)] {
        check_param(name, p)?;
    }
    RecursionModel::new(
        Arc::new(Cascade { q, v, b, degrees }),
        ScalarLaw::default(),
        ScalarLaw::default(),
        constants(1.0, BoundMode::MatrixNorm { k: Some(1.0), k0: None }),
    )
}

fn one() -> f64 {
    1.0
}

fn param_one() -> Param {
    Param::Value(1.0)
}

fn param_zero() -> Param {
    Param::Value(0.0)
}

fn param_inf() -> Param {
    Param::Value(f64::INFINITY)
}

/// Serializable description of a built-in model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Degroot {
        c: f64,
        #[serde(default)]
        f: DeGrootForm,
        #[serde(default = "param_zero")]
        q: Param,
        #[serde(default)]
        zeta: ScalarLaw,
        #[serde(default = "one")]
        p: f64,
        #[serde(default)]
        degrees: DegreeSource,
        #[serde(default)]
        holder: Option<Holder>,
    },
    Voter {
        epsilon: f64,
        #[serde(default = "one")]
        p: f64,
        #[serde(default)]
        degrees: DegreeSource,
        #[serde(default)]
        holder: Option<Holder>,
    },
    Pagerank {
        c: f64,
        #[serde(default = "param_one")]
        q: Param,
        #[serde(default)]
        degrees: DegreeSource,
        #[serde(default)]
        holder: Option<Holder>,
    },
    Cascade {
        #[serde(default = "param_zero")]
        q: Param,
        #[serde(default = "param_zero")]
        v: Param,
        #[serde(default = "param_inf")]
        b: Param,
        #[serde(default)]
        degrees: DegreeSource,
        #[serde(default)]
        holder: Option<Holder>,
    },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Degroot { .. } => "degroot",
            ModelSpec::Voter { .. } => "voter",
            ModelSpec::Pagerank { .. } => "pagerank",
            ModelSpec::Cascade { .. } => "cascade",
        }
    }

    pub fn build(&self) -> Result<RecursionModel> {
        let (model, holder) = match self.clone() {
            ModelSpec::Degroot { c, f, q, zeta, p, degrees, holder } => {
                (model_degroot_with(c, f, q, zeta, p, degrees)?, holder)
            }
            ModelSpec::Voter { epsilon, p, degrees, holder } => (model_voter_with(epsilon, p, degrees)?, holder),
            ModelSpec::Pagerank { c, q, degrees, holder } => (model_pagerank_with(c, q, degrees)?, holder),
            ModelSpec::Cascade { q, v, b, degrees, holder } => (model_cascade_with(q, v, b, degrees)?, holder),
        };
        Ok(match holder {
            Some(h) => model.with_holder(h),
            None => model,
        })
    }
}
