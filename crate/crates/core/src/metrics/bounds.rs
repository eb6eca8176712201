use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::InitialLaw;
use crate::recursion::{Holder, RecursionModel};
use crate::seed::{Seed, Stream};
use crate::tree::GWTreeSpec;

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0 }
    }

    /// `(mean y)^(1/p)` with a delta-method standard error.
    pub fn pth_root_of_mean(ys: &[f64], p: f64) -> Self {
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = if ys.len() > 1 { ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        let value = mean.powf(1.0 / p);
        let stderr = if mean > 0.0 { value / (p * mean) * (var / n).sqrt() } else { 0.0 };
        Estimate { value, stderr }
    }
}

/// Inputs to the moment and coupling bounds. Moment terms are `(E[.^p])^(1/p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub p: f64,
    pub c: f64,
    pub eps: f64,
    pub r0: f64,
    #[serde(default)]
    pub holder: Option<Holder>,
    /// `sigma_-(X_root) N_root`
    pub root_sigma_minus_n: f64,
    /// `beta(X_root)`
    pub root_beta: f64,
    /// `sigma_+(X_1)`
    pub body_sigma_plus: f64,
    /// `sigma_+(X_1) beta(X_1)`
    pub body_sigma_plus_beta: f64,
    /// `sigma_+(X_1) (beta(X_1) v r0)`
    pub body_sigma_plus_beta_or_r0: f64,
    /// `|g(0, X_1)|`
    pub body_g0: f64,
}

/// Standard errors of the estimated entries of [`BoundInputs`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundStderr {
    pub c: f64,
    pub root_sigma_minus_n: f64,
    pub root_beta: f64,
    pub body_sigma_plus: f64,
    pub body_sigma_plus_beta: f64,
    pub body_sigma_plus_beta_or_r0: f64,
    pub body_g0: f64,
}

impl BoundInputs {
    /// Estimates every moment term from `m` root and `m` body draws of `spec`.
    pub fn estimate(
        spec: &GWTreeSpec,
        model: &RecursionModel,
        init: &InitialLaw,
        eps: f64,
        m: usize,
        seed: Seed,
    ) -> Result<(BoundInputs, BoundStderr)> {
        if m == 0 {
            return Err(Error::InvalidParameter("moment estimation needs at least one draw".into()));
        }
        let p = model.p();
        let r0 = init.abs_moment(p);
        let roots: Vec<[f64; 2]> = (0..m)
            .into_par_iter()
            .map(|i| {
                let x = spec.sample_root(&mut seed.rng(Stream::Moments, &[0, i as u64]));
                [(model.sigma_minus(&x) * x.d_minus as f64).powf(p), model.beta(&x).powf(p)]
            })
            .collect();
        let bodies: Vec<[f64; 5]> = (0..m)
            .into_par_iter()
            .map(|i| {
                let x = spec.sample_body(&mut seed.rng(Stream::Moments, &[1, i as u64]));
                let (sp, b) = (model.sigma_plus(&x), model.beta(&x));
                [
                    (x.d_minus as f64 * model.sigma_minus(&x) * sp).powf(p),
                    sp.powf(p),
                    (sp * b).powf(p),
                    (sp * b.max(r0)).powf(p),
                    model.g(0.0, &x).abs().powf(p),
                ]
            })
            .collect();
        let col =
            |rows: &[[f64; 2]], k: usize| Estimate::pth_root_of_mean(&rows.iter().map(|r| r[k]).collect::<Vec<_>>(), p);
        let colb = |k: usize| Estimate::pth_root_of_mean(&bodies.iter().map(|r| r[k]).collect::<Vec<_>>(), p);
        let (rsn, rb) = (col(&roots, 0), col(&roots, 1));
        let (c, sp, spb, spbr, g0) = (colb(0), colb(1), colb(2), colb(3), colb(4));
        Ok((
            BoundInputs {
                p,
                c: c.value,
                eps,
                r0,
                holder: model.constants().holder,
                root_sigma_minus_n: rsn.value,
                root_beta: rb.value,
                body_sigma_plus: sp.value,
                body_sigma_plus_beta: spb.value,
                body_sigma_plus_beta_or_r0: spbr.value,
                body_g0: g0.value,
            },
            BoundStderr {
                c: c.stderr,
                root_sigma_minus_n: rsn.stderr,
                root_beta: rb.stderr,
                body_sigma_plus: sp.stderr,
                body_sigma_plus_beta: spb.stderr,
                body_sigma_plus_beta_or_r0: spbr.stderr,
                body_g0: g0.stderr,
            },
        ))
    }

    /// `B = 1 + ||beta_root|| + 2 ||sigma_- N_root|| q~` with
    /// `q~ = 1 + ||sigma_+|| + ||sigma_+ (beta v r0)|| + ||g(0, .)||`.
    pub fn b_const(&self) -> f64 {
        let q = self.body_sigma_plus_beta_or_r0 + self.body_g0;
        let q_tilde = q + 1.0 + self.body_sigma_plus;
        1.0 + self.root_beta + 2.0 * self.root_sigma_minus_n * q_tilde
    }
}

/// `w(eps) = Q eps^gamma + H eps^alpha + H Q eps^(alpha + gamma)`.
pub fn w_eps(h: &Holder, eps: f64) -> f64 {
    h.q * eps.powf(h.gamma) + h.h * eps.powf(h.alpha) + h.h * h.q * eps.powf(h.alpha + h.gamma)
}

/// `H_{k,eps} = B (1 + (1 + w) sum_{i<k} sum_{j<=k-1-i} c^j (1+w)^i c^i)`.
pub fn h_k_eps(b: f64, c: f64, w: f64, k: usize) -> f64 {
    let mut double = 0.0;
    for i in 0..k {
        let outer = ((1.0 + w) * c).powi(i as i32);
        let inner: f64 = (0..k - i).map(|j| c.powi(j as i32)).sum();
        double += outer * inner;
    }
    b * (1.0 + (1.0 + w) * double)
}

/// `H_{k,eps} w(eps)`; fails when no Holder constants are available.
pub fn coupling_error_bound(b: &BoundInputs, k: usize) -> Result<f64> {
    let holder = b
        .holder
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("coupling bound needs Holder constants (H, Q, alpha, gamma)".into()))?;
    let w = w_eps(holder, b.eps);
    Ok(h_k_eps(b.b_const(), b.c, w, k) * w)
}

/// Upper bounds on `(E|V_1^(k)|^p)^(1/p)` and `(E|R_root^(k+1)|^p)^(1/p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentBound {
    pub v: f64,
    pub r_next: f64,
}

pub fn moment_bound(b: &BoundInputs, k: usize) -> MomentBound {
    let d = b.body_sigma_plus_beta + b.body_g0;
    let a0 = b.body_sigma_plus * b.r0 + b.body_g0;
    let geometric: f64 = (0..k).map(|r| b.c.powi(r as i32)).sum();
    let v = d * geometric + b.c.powi(k as i32) * a0;
    MomentBound { v, r_next: v * b.root_sigma_minus_n + b.root_beta }
}

/// `(E[(N_1 sigma_-(X_1) sigma_+(X_1))^p])^(1/p)` from `m` body draws.
pub fn contraction_estimate(spec: &GWTreeSpec, model: &RecursionModel, m: usize, seed: Seed) -> Result<Estimate> {
    if m < 100 {
        return Err(Error::InvalidParameter(format!("contraction estimate needs at least 100 draws, got {m}")));
    }
    let p = model.p();
    let ys: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let x = spec.sample_body(&mut seed.rng(Stream::Moments, &[2, i as u64]));
            (x.d_minus as f64 * model.sigma_minus(&x) * model.sigma_plus(&x)).powf(p)
        })
        .collect();
    Ok(Estimate::pth_root_of_mean(&ys, p))
}
