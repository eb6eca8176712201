//! Scalar and count distributions used for noises, initial values and
//! parametric offspring laws.

use rand::Rng;
use rand_distr::{Distribution, Geometric, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named real-valued law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ScalarLaw {
    Constant { value: f64 },
    Bernoulli { p: f64 },
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, std_dev: f64 },
}

impl Default for ScalarLaw {
    fn default() -> Self {
        ScalarLaw::Constant { value: 0.0 }
    }
}

impl ScalarLaw {
    pub fn constant(value: f64) -> Self {
        ScalarLaw::Constant { value }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ScalarLaw::Constant { value } => value.is_finite(),
            ScalarLaw::Bernoulli { p } => (0.0..=1.0).contains(&p),
            ScalarLaw::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
            ScalarLaw::Normal { mean, std_dev } => mean.is_finite() && std_dev.is_finite() && std_dev >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad scalar law {self:?}")))
        }
    }

    /// `Some(v)` when the law is a point mass, in which case no randomness is consumed.
    pub fn point_mass(&self) -> Option<f64> {
        match *self {
            ScalarLaw::Constant { value } => Some(value),
            ScalarLaw::Bernoulli { p: 0.0 } => Some(0.0),
            ScalarLaw::Bernoulli { p: 1.0 } => Some(1.0),
            ScalarLaw::Uniform { low, high } if low == high => Some(low),
            ScalarLaw::Normal { mean, std_dev: 0.0 } => Some(mean),
            _ => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ScalarLaw::Constant { value } => value,
            ScalarLaw::Bernoulli { p } => {
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            ScalarLaw::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            ScalarLaw::Normal { mean, std_dev } => {
                Normal::new(mean, std_dev).expect("validated normal law").sample(rng)
            }
        }
    }

    /// `(E|X|^p)^(1/p)`.
    pub fn abs_moment(&self, p: f64) -> f64 {
        match *self {
            ScalarLaw::Constant { value } => value.abs(),
            ScalarLaw::Bernoulli { p: prob } => prob.powf(1.0 / p),
            ScalarLaw::Uniform { low, high } => {
                if high == low {
                    return low.abs();
                }
                let antideriv = |x: f64| x.signum() * x.abs().powf(p + 1.0) / (p + 1.0);
                ((antideriv(high) - antideriv(low)) / (high - low)).powf(1.0 / p)
            }
            ScalarLaw::Normal { mean, std_dev } => {
                if std_dev == 0.0 {
                    return mean.abs();
                }
                // Composite Simpson over mean +- 12 sd.
                let half = 12.0 * std_dev;
                let (a, b) = (mean - half, mean + half);
                let steps = 4000usize;
                let h = (b - a) / steps as f64;
                let f = |x: f64| {
                    let z = (x - mean) / std_dev;
                    x.abs().powf(p) * (-0.5 * z * z).exp() / (std_dev * (2.0 * std::f64::consts::PI).sqrt())
                };
                let mut acc = f(a) + f(b);
                for i in 1..steps {
                    let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                    acc += w * f(a + i as f64 * h);
                }
                (acc * h / 3.0).powf(1.0 / p)
            }
        }
    }
}

/// Law of the initial vector `R^(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialLaw {
    /// i.i.d. coordinates.
    Iid(ScalarLaw),
    /// An explicit vector; only meaningful on a graph of matching size.
    Vector(Vec<f64>),
}

impl Default for InitialLaw {
    fn default() -> Self {
        InitialLaw::Iid(ScalarLaw::default())
    }
}

impl InitialLaw {
    /// The scalar law used wherever a single initial value is needed (tree leaves, pools).
    pub fn scalar(&self) -> Result<&ScalarLaw> {
        match self {
            InitialLaw::Iid(law) => Ok(law),
            InitialLaw::Vector(_) => Err(Error::InvalidParameter(
                "an explicit initial vector has no scalar law for tree constructions".into(),
            )),
        }
    }

    /// `r_0 = (E|R^(0)|^p)^(1/p)`; for an explicit vector, the empirical version.
    pub fn abs_moment(&self, p: f64) -> f64 {
        match self {
            InitialLaw::Iid(law) => law.abs_moment(p),
            InitialLaw::Vector(v) if v.is_empty() => 0.0,
            InitialLaw::Vector(v) => (v.iter().map(|x| x.abs().powf(p)).sum::<f64>() / v.len() as f64).powf(1.0 / p),
        }
    }
}

/// Law of a nonnegative integer (offspring counts and degrees).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CountLaw {
    Constant {
        value: usize,
    },
    Poisson {
        mean: f64,
    },
    /// Number of failures before the first success.
    Geometric {
        p: f64,
    },
    /// Weighted atom table `(value, weight)`; weights need not be normalized.
    Atoms {
        atoms: Vec<(usize, f64)>,
    },
}

impl CountLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            CountLaw::Constant { .. } => true,
            CountLaw::Poisson { mean } => mean.is_finite() && *mean >= 0.0,
            CountLaw::Geometric { p } => *p > 0.0 && *p <= 1.0,
            CountLaw::Atoms { atoms } => {
                !atoms.is_empty()
                    && atoms.iter().all(|(_, w)| w.is_finite() && *w >= 0.0)
                    && atoms.iter().any(|(_, w)| *w > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad count law {self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            CountLaw::Constant { value } => *value,
            CountLaw::Poisson { mean } => poisson(*mean, rng),
            CountLaw::Geometric { p } => {
                if *p >= 1.0 {
                    0
                } else {
                    Geometric::new(*p).expect("validated geometric law").sample(rng) as usize
                }
            }
            CountLaw::Atoms { atoms } => {
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                let mut u = rng.random::<f64>() * total;
                for &(v, w) in atoms {
                    if u < w {
                        return v;
                    }
                    u -= w;
                }
                atoms.iter().rev().find(|a| a.1 > 0.0).map(|a| a.0).unwrap_or(0)
            }
        }
    }
}

pub(crate) fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).expect("positive finite mean").sample(rng) as usize
    }
}
