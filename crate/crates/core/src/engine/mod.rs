//! GAS(1,1) filtering, likelihood evaluation and maximum-likelihood fitting.
//!
//! The recursion is f_t = ω(Z_t) + B(Z_t) f_{t−1} + A(Z_t) s_{t−1}, where the
//! leaf of Z_t picks the coefficient block. For `NormalScale` and
//! `ExpDuration` the stored parameters are in GARCH/ACD form (B = β + α,
//! A = α); for the other families B = β and A = α.

mod mle;
mod optim;
mod params;
mod simulate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::{build_kernel, with_kernel, Family, Kernel};
use crate::series::SeriesView;
use crate::special;

pub use mle::{baseline_starts, fit_baseline, fit_mle, FitOptions, FitResult, FreeSet};
pub use optim::{minimize_bfgs, BfgsOptions, BfgsResult};
pub use params::{constrain, unconstrain, NU_MAX, NU_MIN};
pub use simulate::{simulate, SimulatedData, StateGenerator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    /// Number of score lags.
    pub p: usize,
    /// Number of autoregressive lags.
    pub q: usize,
}

impl ModelSpec {
    pub fn new(family: Family) -> Self {
        Self { family, p: 1, q: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p != 1 || self.q != 1 {
            return Err(Error::Config(format!(
                "only GAS(1,1) is supported, got GAS({},{})",
                self.p, self.q
            )));
        }
        Ok(())
    }
}

/// Coefficient block (ω, β, α) of one leaf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafParams {
    pub omega: f64,
    pub beta: f64,
    pub alpha: f64,
}

/// Recursion coefficients f = ω + b f₋₁ + a s₋₁.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Coeffs {
    pub omega: f64,
    pub b: f64,
    pub a: f64,
}

impl LeafParams {
    pub fn new(omega: f64, beta: f64, alpha: f64) -> Self {
        Self { omega, beta, alpha }
    }

    pub(crate) fn coeffs(&self, family: Family) -> Coeffs {
        let b = if family.garch_form() {
            self.beta + self.alpha
        } else {
            self.beta
        };
        Coeffs {
            omega: self.omega,
            b,
            a: self.alpha,
        }
    }

    pub fn validate(&self, family: Family) -> Result<()> {
        let LeafParams { omega, beta, alpha } = *self;
        let finite = omega.is_finite() && beta.is_finite() && alpha.is_finite();
        let ok = finite
            && match family {
                Family::NormalScale | Family::ExpDuration => {
                    omega > 0.0 && alpha >= 0.0 && beta >= 0.0 && alpha + beta < 1.0
                }
                Family::StudentTScale => omega > 0.0 && (0.0..1.0).contains(&beta) && alpha >= 0.0,
                Family::StudentTCopula => beta.abs() < 1.0,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "(omega={omega}, beta={beta}, alpha={alpha}) violates the {family} constraints"
            )))
        }
    }

    /// Long-run level of f implied by the block.
    pub fn long_run(&self, family: Family) -> f64 {
        let c = self.coeffs(family);
        c.omega / (1.0 - c.b)
    }

    /// Persistence of the block: α + β in GARCH form, β otherwise.
    pub fn persistence(&self, family: Family) -> f64 {
        self.coeffs(family).b
    }
}

/// Leaf coefficient blocks with the static parameter shared across leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasParams {
    pub leaves: Vec<LeafParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

impl GasParams {
    pub fn single(leaf: LeafParams, nu: Option<f64>) -> Self {
        Self {
            leaves: vec![leaf],
            nu,
        }
    }

    pub fn validate(&self, family: Family) -> Result<()> {
        if self.leaves.is_empty() {
            return Err(Error::InvalidParams("no leaf parameters".into()));
        }
        for leaf in &self.leaves {
            leaf.validate(family)?;
        }
        family.check_nu(self.nu)?;
        Ok(())
    }

    pub(crate) fn coeffs(&self, family: Family) -> Vec<Coeffs> {
        self.leaves.iter().map(|l| l.coeffs(family)).collect()
    }
}

/// Filtered parameter path and per-observation log likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub f: Vec<f64>,
    pub loglik: Vec<f64>,
}

/// Starting value f₁: second moment for scale families, mean duration, or
/// the link of the normal-score correlation of the PIT pairs.
pub fn initial_state(family: Family, y: SeriesView<'_>) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::Data("empty estimation window".into()));
    }
    let n = y.len() as f64;
    let f0 = match (family, y) {
        (Family::NormalScale | Family::StudentTScale, SeriesView::Univariate(v)) => {
            v.iter().map(|x| x * x).sum::<f64>() / n
        }
        (Family::ExpDuration, SeriesView::Univariate(v)) => v.iter().sum::<f64>() / n,
        (Family::StudentTCopula, SeriesView::Bivariate(u)) => {
            let (mut s12, mut s11, mut s22) = (0.0, 0.0, 0.0);
            for p in u {
                let a = special::normal_quantile(special::clamp_unit(p[0]));
                let b = special::normal_quantile(special::clamp_unit(p[1]));
                s12 += a * b;
                s11 += a * a;
                s22 += b * b;
            }
            let rho = (s12 / (s11 * s22).sqrt()).clamp(-0.99, 0.99);
            crate::score::tilde_from_rho(if rho.is_finite() { rho } else { 0.0 })
        }
        _ => return Err(Error::Domain(format!("data dimension does not match {family}"))),
    };
    family.check_state(f0).map_err(|_| {
        Error::Data(format!("degenerate estimation window: initial state {f0}"))
    })?;
    Ok(f0)
}

fn check_leaf_ids(leaf_ids: &[u32], n: usize, n_leaves: usize) -> Result<()> {
    if leaf_ids.len() != n {
        return Err(Error::Data(format!(
            "{} leaf assignments for {} observations",
            leaf_ids.len(),
            n
        )));
    }
    if let Some(&bad) = leaf_ids.iter().find(|&&j| j as usize >= n_leaves) {
        return Err(Error::Data(format!("leaf id {bad} out of range ({n_leaves} leaves)")));
    }
    Ok(())
}

/// Runs the recursion over the whole sample and returns f_t and log p(y_t).
pub fn filter(
    spec: &ModelSpec,
    params: &GasParams,
    leaf_ids: &[u32],
    y: SeriesView<'_>,
    f0: f64,
) -> Result<FilterOutput> {
    spec.validate()?;
    params.validate(spec.family)?;
    check_leaf_ids(leaf_ids, y.len(), params.leaves.len())?;
    let kernel = build_kernel(spec.family, y, params.nu)?;
    let coeffs = params.coeffs(spec.family);
    with_kernel!(&kernel, k => filter_path(k, leaf_ids, &coeffs, f0))
}

/// Log densities of `y` evaluated along a given parameter path.
pub fn loglik_path(family: Family, y: SeriesView<'_>, f: &[f64], nu: Option<f64>) -> Result<Vec<f64>> {
    if f.len() != y.len() {
        return Err(Error::Data(format!("{} states for {} observations", f.len(), y.len())));
    }
    let kernel = build_kernel(family, y, nu)?;
    with_kernel!(&kernel, k => {
        f.iter()
            .enumerate()
            .map(|(t, &ft)| {
                let (ll, _) = k.ll_s(t, ft);
                if ll.is_finite() {
                    Ok(ll)
                } else {
                    Err(Error::FilterDivergence { t })
                }
            })
            .collect()
    })
}

pub(crate) fn filter_path<K: Kernel>(
    k: &K,
    leaf_ids: &[u32],
    coeffs: &[Coeffs],
    f0: f64,
) -> Result<FilterOutput> {
    let n = k.len();
    let mut f_path = Vec::with_capacity(n);
    let mut ll_path = Vec::with_capacity(n);
    let mut f = f0;
    let mut s_prev = 0.0;
    for t in 0..n {
        if t > 0 {
            let c = &coeffs[leaf_ids[t] as usize];
            f = c.omega + c.b * f + c.a * s_prev;
        }
        let (ll, s) = k.ll_s(t, f);
        if !ll.is_finite() || !s.is_finite() || !f.is_finite() {
            return Err(Error::FilterDivergence { t });
        }
        f_path.push(f);
        ll_path.push(ll);
        s_prev = s;
    }
    Ok(FilterOutput {
        f: f_path,
        loglik: ll_path,
    })
}

/// Sum of log densities; NaN when the recursion leaves the state space.
pub(crate) fn loglik_sum<K: Kernel>(k: &K, leaf_ids: &[u32], coeffs: &[Coeffs], f0: f64) -> f64 {
    let n = k.len();
    let mut f = f0;
    let mut s_prev = 0.0;
    let mut acc = 0.0;
    for t in 0..n {
        if t > 0 {
            let c = &coeffs[leaf_ids[t] as usize];
            f = c.omega + c.b * f + c.a * s_prev;
        }
        let (ll, s) = k.ll_s(t, f);
        if !ll.is_finite() || !s.is_finite() {
            return f64::NAN;
        }
        acc += ll;
        s_prev = s;
    }
    acc
}

/// Sum of log densities and its gradient with respect to the recursion
/// coefficients (ω, b, a) of the leaves that have a slot.
///
/// `slots[j]` is the position of leaf j in the gradient (in units of three
/// entries), or `None` for frozen leaves. The gradient is accumulated by
/// forward sensitivity propagation of ∂f_t/∂(ω, b, a).
pub(crate) fn loglik_grad<K: Kernel>(
    k: &K,
    leaf_ids: &[u32],
    coeffs: &[Coeffs],
    slots: &[Option<usize>],
    f0: f64,
    grad: &mut [f64],
) -> f64 {
    let n = k.len();
    let m = grad.len();
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut dfdt = vec![0.0; m];
    let mut f = f0;
    let mut s_prev = 0.0;
    let mut ds_prev = 0.0;
    let mut acc = 0.0;
    for t in 0..n {
        if t > 0 {
            let leaf = leaf_ids[t] as usize;
            let c = &coeffs[leaf];
            let carry = c.b + c.a * ds_prev;
            for d in dfdt.iter_mut() {
                *d *= carry;
            }
            if let Some(slot) = slots[leaf] {
                let o = 3 * slot;
                dfdt[o] += 1.0;
                dfdt[o + 1] += f;
                dfdt[o + 2] += s_prev;
            }
            f = c.omega + c.b * f + c.a * s_prev;
        }
        let p = k.point(t, f);
        if !p.ll.is_finite() || !p.s.is_finite() || !p.ds.is_finite() {
            return f64::NAN;
        }
        acc += p.ll;
        for (g, d) in grad.iter_mut().zip(&dfdt) {
            *g += p.score * d;
        }
        s_prev = p.s;
        ds_prev = p.ds;
    }
    acc
}
