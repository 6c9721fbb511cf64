//! Maps between constrained leaf parameters and the unconstrained vector the
//! optimizer works on. Layout: three entries per leaf, then ν when the
//! family has one.

use super::{GasParams, LeafParams, ModelSpec};
use crate::error::{Error, Result};
use crate::score::Family;

pub const NU_MIN: f64 = 2.1;
pub const NU_MAX: f64 = 200.0;

/// Keeps logistic and tanh images strictly inside their open intervals
/// when the argument saturates in floating point.
const EDGE: f64 = 1e-12;

fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        Ok((p / (1.0 - p)).ln())
    } else {
        Err(Error::InvalidParams(format!("{p} is outside the open unit interval")))
    }
}

fn ln_pos(x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x.ln())
    } else {
        Err(Error::InvalidParams(format!("{x} must be strictly positive")))
    }
}

/// Leaf block from its three unconstrained coordinates, plus the Jacobian
/// of the recursion coefficients (ω, b, a) with respect to them
/// (`jac[i][j]` = ∂coef_i/∂u_j).
pub(crate) fn leaf_from_u(family: Family, u: [f64; 3]) -> (LeafParams, [[f64; 3]; 3]) {
    match family {
        Family::NormalScale | Family::ExpDuration => {
            let omega = u[0].exp().max(f64::MIN_POSITIVE);
            let pers = logistic(u[1]).min(1.0 - EDGE);
            let share = logistic(u[2]);
            let alpha = pers * share;
            let beta = pers - alpha;
            let dp = pers * (1.0 - pers);
            let ds = share * (1.0 - share);
            (
                LeafParams { omega, beta, alpha },
                [[omega, 0.0, 0.0], [0.0, dp, 0.0], [0.0, share * dp, pers * ds]],
            )
        }
        Family::StudentTScale => {
            let omega = u[0].exp().max(f64::MIN_POSITIVE);
            let beta = logistic(u[1]).min(1.0 - EDGE);
            let alpha = u[2].exp();
            (
                LeafParams { omega, beta, alpha },
                [[omega, 0.0, 0.0], [0.0, beta * (1.0 - beta), 0.0], [0.0, 0.0, alpha]],
            )
        }
        Family::StudentTCopula => {
            let beta = u[1].tanh().clamp(EDGE - 1.0, 1.0 - EDGE);
            (
                LeafParams {
                    omega: u[0],
                    beta,
                    alpha: u[2],
                },
                [[1.0, 0.0, 0.0], [0.0, 1.0 - beta * beta, 0.0], [0.0, 0.0, 1.0]],
            )
        }
    }
}

pub(crate) fn leaf_to_u(family: Family, p: &LeafParams) -> Result<[f64; 3]> {
    match family {
        Family::NormalScale | Family::ExpDuration => {
            let pers = p.alpha + p.beta;
            Ok([ln_pos(p.omega)?, logit(pers)?, logit(p.alpha / pers)?])
        }
        Family::StudentTScale => Ok([ln_pos(p.omega)?, logit(p.beta)?, ln_pos(p.alpha)?]),
        Family::StudentTCopula => {
            if !(p.beta.abs() < 1.0) || !p.omega.is_finite() || !p.alpha.is_finite() {
                return Err(Error::InvalidParams(format!("copula block {p:?} not in the open set")));
            }
            Ok([p.omega, p.beta.atanh(), p.alpha])
        }
    }
}

pub(crate) fn nu_from_u(u: f64) -> f64 {
    (NU_MIN + u.exp()).min(NU_MAX)
}

pub(crate) fn nu_to_u(nu: f64) -> Result<f64> {
    if nu > NU_MIN && nu <= NU_MAX {
        Ok((nu - NU_MIN).ln())
    } else {
        Err(Error::InvalidParams(format!(
            "nu={nu} outside ({NU_MIN}, {NU_MAX}]"
        )))
    }
}

/// Constrained parameters from an unconstrained vector.
pub fn constrain(u: &[f64], spec: &ModelSpec) -> Result<GasParams> {
    let has_nu = spec.family.has_nu();
    let n_leaf_coords = u.len() - usize::from(has_nu);
    if u.len() < usize::from(has_nu) + 3 || !n_leaf_coords.is_multiple_of(3) {
        return Err(Error::InvalidParams(format!(
            "vector of length {} does not fit {}",
            u.len(),
            spec.family
        )));
    }
    let leaves = u[..n_leaf_coords]
        .chunks_exact(3)
        .map(|c| leaf_from_u(spec.family, [c[0], c[1], c[2]]).0)
        .collect();
    Ok(GasParams {
        leaves,
        nu: has_nu.then(|| nu_from_u(u[n_leaf_coords])),
    })
}

/// Inverse of [`constrain`]; fails on parameters on or outside the open
/// constraint set.
pub fn unconstrain(params: &GasParams, spec: &ModelSpec) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(3 * params.leaves.len() + 1);
    for leaf in &params.leaves {
        out.extend(leaf_to_u(spec.family, leaf)?);
    }
    if spec.family.has_nu() {
        let nu = params
            .nu
            .ok_or_else(|| Error::InvalidParams(format!("{} needs nu", spec.family)))?;
        out.push(nu_to_u(nu)?);
    }
    Ok(out)
}
