//! Maximum-likelihood estimation of leaf blocks and ν.
//!
//! The objective is the negative mean log likelihood on the unconstrained
//! scale. Leaf-coefficient derivatives come from the forward sensitivity
//! recursion; the ν coordinate uses central differences.

use rayon::prelude::*;

use super::optim::{central_difference, minimize_bfgs, BfgsOptions};
use super::params::{leaf_from_u, leaf_to_u, nu_from_u, nu_to_u, NU_MAX, NU_MIN};
use super::{check_leaf_ids, loglik_grad, loglik_sum, GasParams, LeafParams, ModelSpec};
use crate::error::{Error, Result};
use crate::score::{build_kernel, with_kernel, Family, KernelBox};
use crate::series::SeriesView;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub bfgs: BfgsOptions,
    /// Iteration budget of each start before the best one is continued.
    pub pilot_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            bfgs: BfgsOptions::default(),
            pilot_iter: 25,
        }
    }
}

/// Which parts of the parameter vector are optimized; everything else is
/// held at its initial value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreeSet {
    pub leaves: Vec<usize>,
    pub nu: bool,
}

impl FreeSet {
    pub fn all(n_leaves: usize, family: Family) -> Self {
        Self {
            leaves: (0..n_leaves).collect(),
            nu: family.has_nu(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: GasParams,
    /// Mean log likelihood on the fitted window.
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

struct Objective<'a> {
    family: Family,
    y: SeriesView<'a>,
    leaf_ids: &'a [u32],
    f0: f64,
    base: GasParams,
    free: &'a FreeSet,
    slots: Vec<Option<usize>>,
    fixed_kernel: Option<KernelBox<'a>>,
    n: f64,
}

impl<'a> Objective<'a> {
    fn new(
        spec: &ModelSpec,
        y: SeriesView<'a>,
        leaf_ids: &'a [u32],
        f0: f64,
        base: GasParams,
        free: &'a FreeSet,
    ) -> Result<Self> {
        let mut slots = vec![None; base.leaves.len()];
        for (i, &leaf) in free.leaves.iter().enumerate() {
            if leaf >= slots.len() || slots[leaf].is_some() {
                return Err(Error::InvalidParams(format!("bad free leaf index {leaf}")));
            }
            slots[leaf] = Some(i);
        }
        if free.nu && !spec.family.has_nu() {
            return Err(Error::InvalidParams(format!("{} has no nu", spec.family)));
        }
        let fixed_kernel = if free.nu {
            None
        } else {
            Some(build_kernel(spec.family, y, base.nu)?)
        };
        Ok(Self {
            family: spec.family,
            y,
            leaf_ids,
            f0,
            base,
            free,
            slots,
            fixed_kernel,
            n: y.len() as f64,
        })
    }

    fn dim(&self) -> usize {
        3 * self.free.leaves.len() + usize::from(self.free.nu)
    }

    fn encode(&self, p: &GasParams) -> Result<Vec<f64>> {
        let mut u = Vec::with_capacity(self.dim());
        for &leaf in &self.free.leaves {
            u.extend(leaf_to_u(self.family, &interior(self.family, p.leaves[leaf]))?);
        }
        if self.free.nu {
            let nu = p.nu.unwrap_or(8.0).clamp(NU_MIN + 1e-6, NU_MAX);
            u.push(nu_to_u(nu)?);
        }
        Ok(u)
    }

    fn decode(&self, u: &[f64], jacs: Option<&mut Vec<[[f64; 3]; 3]>>) -> GasParams {
        let mut p = self.base.clone();
        let mut local = Vec::new();
        let jacs = jacs.unwrap_or(&mut local);
        jacs.clear();
        for (i, &leaf) in self.free.leaves.iter().enumerate() {
            let (lp, jac) = leaf_from_u(self.family, [u[3 * i], u[3 * i + 1], u[3 * i + 2]]);
            p.leaves[leaf] = lp;
            jacs.push(jac);
        }
        if self.free.nu {
            p.nu = Some(nu_from_u(u[u.len() - 1]));
        }
        p
    }

    fn total_loglik(&self, p: &GasParams) -> f64 {
        let coeffs = p.coeffs(self.family);
        match &self.fixed_kernel {
            Some(kb) => with_kernel!(kb, k => loglik_sum(k, self.leaf_ids, &coeffs, self.f0)),
            None => match build_kernel(self.family, self.y, p.nu) {
                Ok(kb) => with_kernel!(&kb, k => loglik_sum(k, self.leaf_ids, &coeffs, self.f0)),
                Err(_) => f64::NAN,
            },
        }
    }

    /// Negative mean log likelihood and its gradient in `u`.
    fn eval(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let mut jacs = Vec::with_capacity(self.free.leaves.len());
        let p = self.decode(u, Some(&mut jacs));
        let coeffs = p.coeffs(self.family);
        let mut gc = vec![0.0; 3 * self.free.leaves.len()];
        let ll = match &self.fixed_kernel {
            Some(kb) => with_kernel!(kb, k => loglik_grad(k, self.leaf_ids, &coeffs, &self.slots, self.f0, &mut gc)),
            None => match build_kernel(self.family, self.y, p.nu) {
                Ok(kb) => with_kernel!(&kb, k => loglik_grad(k, self.leaf_ids, &coeffs, &self.slots, self.f0, &mut gc)),
                Err(_) => f64::NAN,
            },
        };
        if !ll.is_finite() {
            return f64::NAN;
        }
        for (i, jac) in jacs.iter().enumerate() {
            for j in 0..3 {
                let mut acc = 0.0;
                for (c, row) in jac.iter().enumerate() {
                    acc += gc[3 * i + c] * row[j];
                }
                grad[3 * i + j] = -acc / self.n;
            }
        }
        if self.free.nu {
            let last = u.len() - 1;
            let d = central_difference(|v| self.total_loglik(&self.decode(v, None)), u, last);
            grad[last] = -d / self.n;
        }
        -ll / self.n
    }
}

/// Nudges a block into the open constraint set so it can be mapped to the
/// unconstrained scale.
fn interior(family: Family, mut p: LeafParams) -> LeafParams {
    const EPS: f64 = 1e-8;
    match family {
        Family::NormalScale | Family::ExpDuration => {
            p.omega = p.omega.max(1e-12);
            p.alpha = p.alpha.max(EPS);
            p.beta = p.beta.max(EPS);
            let pers = p.alpha + p.beta;
            if pers >= 1.0 - EPS {
                let scale = (1.0 - EPS) / pers;
                p.alpha *= scale;
                p.beta *= scale;
            }
        }
        Family::StudentTScale => {
            p.omega = p.omega.max(1e-12);
            p.beta = p.beta.clamp(EPS, 1.0 - EPS);
            p.alpha = p.alpha.max(EPS);
        }
        Family::StudentTCopula => {
            p.beta = p.beta.clamp(-1.0 + EPS, 1.0 - EPS);
        }
    }
    p
}

fn finish(obj: &Objective<'_>, u: &[f64], value: f64, converged: bool, iterations: usize) -> FitResult {
    FitResult {
        params: obj.decode(u, None),
        loglik: -value,
        converged,
        iterations,
    }
}

/// Maximizes the mean log likelihood from each starting point, runs every
/// start for a short pilot, then continues the best one to convergence.
///
/// Blocks and ν outside `free` stay at their values in the first start.
#[allow(clippy::too_many_arguments)]
pub fn fit_mle(
    spec: &ModelSpec,
    y: SeriesView<'_>,
    leaf_ids: &[u32],
    f0: f64,
    starts: &[GasParams],
    free: &FreeSet,
    opts: &FitOptions,
) -> Result<FitResult> {
    spec.validate()?;
    let first = starts
        .first()
        .ok_or_else(|| Error::Estimation("no starting values".into()))?;
    first.validate(spec.family)?;
    check_leaf_ids(leaf_ids, y.len(), first.leaves.len())?;
    spec.family.check_state(f0)?;
    let obj = Objective::new(spec, y, leaf_ids, f0, first.clone(), free)?;
    let dim = obj.dim();

    let mut points = Vec::with_capacity(starts.len());
    for s in starts {
        if s.leaves.len() != first.leaves.len() {
            return Err(Error::InvalidParams("starts differ in leaf count".into()));
        }
        points.push(obj.encode(s)?);
    }

    if dim == 0 {
        let ll = obj.total_loglik(first);
        if !ll.is_finite() {
            return Err(Error::Estimation("likelihood not finite at the given parameters".into()));
        }
        return Ok(FitResult {
            params: first.clone(),
            loglik: ll / obj.n,
            converged: true,
            iterations: 0,
        });
    }

    let full = opts.bfgs;
    let run = |x0: &[f64], max_iter: usize| {
        minimize_bfgs(
            |u, g| obj.eval(u, g),
            x0,
            &BfgsOptions {
                max_iter,
                ..full
            },
        )
    };

    let best = if points.len() == 1 {
        run(&points[0], full.max_iter)
    } else {
        let pilots: Vec<_> = points
            .par_iter()
            .map(|x0| run(x0, opts.pilot_iter.min(full.max_iter)))
            .collect();
        // Lowest objective wins; ties go to the earlier start.
        let mut best_i = None;
        for (i, r) in pilots.iter().enumerate() {
            if r.value.is_finite() && best_i.is_none_or(|b: usize| r.value < pilots[b].value) {
                best_i = Some(i);
            }
        }
        let Some(bi) = best_i else {
            return Err(Error::Estimation("no start produced a finite likelihood".into()));
        };
        let pilot = &pilots[bi];
        if pilot.converged {
            pilot.clone()
        } else {
            let mut cont = run(&pilot.x, full.max_iter.saturating_sub(pilot.iterations).max(1));
            cont.iterations += pilot.iterations;
            cont
        }
    };
    if !best.value.is_finite() {
        return Err(Error::Estimation("likelihood not finite at the starting values".into()));
    }
    if !best.converged {
        log::debug!("optimizer stopped after {} iterations without meeting the gradient tolerance", best.iterations);
    }
    Ok(finish(&obj, &best.x, best.value, best.converged, best.iterations))
}

/// Deterministic moment-matched starting values for a single-leaf model
/// whose filter starts at `f0`.
pub fn baseline_starts(family: Family, f0: f64) -> Vec<GasParams> {
    match family {
        Family::NormalScale | Family::ExpDuration => {
            [(0.90, 0.05), (0.95, 0.03), (0.80, 0.10), (0.60, 0.20), (0.97, 0.02)]
                .iter()
                .map(|&(b, a)| GasParams::single(LeafParams::new(f0 * (1.0 - a - b), b, a), None))
                .collect()
        }
        Family::StudentTScale => {
            [(0.95, 0.05), (0.98, 0.03), (0.90, 0.08), (0.80, 0.15), (0.60, 0.25)]
                .iter()
                .map(|&(b, a)| GasParams::single(LeafParams::new(f0 * (1.0 - b), b, a), Some(8.0)))
                .collect()
        }
        Family::StudentTCopula => {
            [(0.95, 0.05), (0.98, 0.02), (0.90, 0.08), (0.80, 0.10), (0.50, 0.05)]
                .iter()
                .map(|&(b, a)| GasParams::single(LeafParams::new(f0 * (1.0 - b), b, a), Some(10.0)))
                .collect()
        }
    }
}

/// Plain single-leaf GAS fit (all parameters free, multi-start).
pub fn fit_baseline(
    spec: &ModelSpec,
    y: SeriesView<'_>,
    f0: f64,
    opts: &FitOptions,
) -> Result<FitResult> {
    let ids = vec![0u32; y.len()];
    fit_mle(
        spec,
        y,
        &ids,
        f0,
        &baseline_starts(spec.family, f0),
        &FreeSet::all(1, spec.family),
        opts,
    )
}
