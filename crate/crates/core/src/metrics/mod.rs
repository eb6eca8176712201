//! Exact one-dimensional Wasserstein distances and the explicit moment and
//! coupling bounds.

mod bounds;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bounds::{
    contraction_estimate, coupling_error_bound, h_k_eps, moment_bound, w_eps, BoundInputs, Estimate, MomentBound,
};

/// A finitely supported probability measure on the real line.
///
/// Atoms are strictly increasing in value; weights are positive and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDist {
    atoms: Vec<(f64, f64)>,
}

impl EmpiricalDist {
    /// Equal-weight atoms at the given samples.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let w = 1.0 / samples.len() as f64;
        Self::from_weighted(samples.iter().map(|&x| (x, w)).collect())
    }

    /// Arbitrary nonnegative weights; zero-weight atoms are dropped, equal
    /// values merged and weights renormalized.
    pub fn from_weighted(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if let Some(&(x, w)) = atoms.iter().find(|(x, w)| !x.is_finite() || !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(format!("bad atom ({x}, {w})")));
        }
        atoms.retain(|a| a.1 > 0.0);
        if atoms.is_empty() {
            return Err(Error::InsufficientData("distribution has no positive-weight atoms".into()));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += w,
                _ => merged.push((x, w)),
            }
        }
        let total: f64 = merged.iter().map(|a| a.1).sum();
        for a in &mut merged {
            a.1 /= total;
        }
        Ok(EmpiricalDist { atoms: merged })
    }

    pub fn point_mass(x: f64) -> Self {
        EmpiricalDist { atoms: vec![(x, 1.0)] }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(x, w)| x * w).sum()
    }

    /// `(E|X|^p)^(1/p)`.
    pub fn abs_moment(&self, p: f64) -> f64 {
        self.atoms.iter().map(|(x, w)| w * x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms.iter().map(|(x, w)| w * (x - m).powi(2)).sum()
    }

    /// Left-continuous quantile `F^{-1}(u)` for `u` in `(0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for &(x, w) in &self.atoms {
            acc += w;
            if u <= acc {
                return x;
            }
        }
        self.atoms.last().expect("nonempty").0
    }

    /// Cumulative weights with the last entry pinned to exactly 1.
    fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out: Vec<f64> = self
            .atoms
            .iter()
            .map(|a| {
                acc += a.1;
                acc
            })
            .collect();
        *out.last_mut().expect("nonempty") = 1.0;
        out
    }
}

/// `(int_0^1 |F^{-1}(u) - G^{-1}(u)|^p du)^(1/p)`, integrated exactly over
/// the merged breakpoints of the two quantile functions.
pub fn wasserstein_p(a: &EmpiricalDist, b: &EmpiricalDist, p: f64) -> f64 {
    assert!(p >= 1.0, "order must be at least 1, got {p}");
    let (ca, cb) = (a.cumulative(), b.cumulative());
    let (mut i, mut j) = (0, 0);
    let mut u = 0.0;
    let mut acc = 0.0;
    while i < ca.len() && j < cb.len() {
        let next = ca[i].min(cb[j]);
        let gap = (a.atoms[i].0 - b.atoms[j].0).abs();
        let cost = if p == 1.0 { gap } else { gap.powf(p) };
        acc += (next - u) * cost;
        u = next;
        if ca[i] == next {
            i += 1;
        }
        if cb[j] == next {
            j += 1;
        }
    }
    if p == 1.0 {
        acc
    } else {
        acc.powf(1.0 / p)
    }
}

/// Consecutive distances along a sequence of distributions and the
/// least-squares slope of their logarithm against the index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTrace {
    pub distances: Vec<f64>,
    /// `None` when fewer than two leading distances are positive.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

pub fn wasserstein_decay_trace(dists: &[EmpiricalDist], p: f64) -> Result<DecayTrace> {
    if dists.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "decay trace needs at least 3 distributions, got {}",
            dists.len()
        )));
    }
    let distances: Vec<f64> = dists.windows(2).map(|w| wasserstein_p(&w[0], &w[1], p)).collect();
    let (slope, intercept) = match log_slope(&distances) {
        Some((s, c)) => (Some(s), Some(c)),
        None => (None, None),
    };
    Ok(DecayTrace { distances, slope, intercept })
}

/// Least-squares fit of `ln d_i = a + s i` over the prefix of positive values.
pub fn log_slope(distances: &[f64]) -> Option<(f64, f64)> {
    let prefix: Vec<(f64, f64)> =
        distances.iter().take_while(|&&d| d > 0.0).enumerate().map(|(i, &d)| (i as f64, d.ln())).collect();
    if prefix.len() < 2 {
        return None;
    }
    let n = prefix.len() as f64;
    let mx = prefix.iter().map(|p| p.0).sum::<f64>() / n;
    let my = prefix.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = prefix.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = prefix.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let s = sxy / sxx;
    Some((s, my - s * mx))
}
