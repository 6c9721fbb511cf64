//! Observation densities, inverse-information scaled scores and probability
//! integral transforms for the four supported families.
//!
//! Every family is parameterised by a single time-varying scalar `f`:
//!
//! | family           | `f`                          | scaled score                 |
//! |------------------|------------------------------|------------------------------|
//! | `NormalScale`    | variance σ²                  | y² − σ²                      |
//! | `StudentTScale`  | variance σ² (unit-variance t)| (1+3/ν)[(ν+1)σ²y²/((ν−2)σ²+y²) − σ²] |
//! | `StudentTCopula` | ρ̃ with ρ = tanh(ρ̃/2)         | closed form below            |
//! | `ExpDuration`    | mean duration μ              | y − μ                        |
//!
//! For the copula the observation is a pair of PITs `u ∈ (0,1)²`. Inside the
//! score the margins are mapped to unit-variance Student-t quantiles
//! `x_i = sqrt((ν−2)/ν) T_ν⁻¹(u_i)`, which is the scaling under which the
//! weight `w = (ν+2)/(ν−2+x'Σ⁻¹x)` makes the score exact for the copula
//! density.

mod kernel;
pub mod oracle;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special;

pub(crate) use kernel::{build_kernel, with_kernel, Kernel, KernelBox, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    NormalScale,
    StudentTScale,
    StudentTCopula,
    ExpDuration,
}

impl Family {
    pub fn has_nu(self) -> bool {
        matches!(self, Family::StudentTScale | Family::StudentTCopula)
    }

    pub fn is_bivariate(self) -> bool {
        matches!(self, Family::StudentTCopula)
    }

    /// Families whose (β, α) are read in GARCH/ACD form, i.e.
    /// f = ω + β f₋₁ + α·(observation), so the GAS loading on f₋₁ is β + α.
    pub fn garch_form(self) -> bool {
        matches!(self, Family::NormalScale | Family::ExpDuration)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::NormalScale => "normal_scale",
            Family::StudentTScale => "student_t_scale",
            Family::StudentTCopula => "student_t_copula",
            Family::ExpDuration => "exp_duration",
        }
    }

    /// Checks the time-varying parameter against the family invariant.
    pub fn check_state(self, f: f64) -> Result<()> {
        let ok = match self {
            Family::NormalScale | Family::StudentTScale | Family::ExpDuration => {
                f.is_finite() && f > 0.0
            }
            Family::StudentTCopula => f.is_finite() && rho_from_tilde(f).abs() < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "state f={f} violates the {} invariant",
                self.name()
            )))
        }
    }

    pub fn check_nu(self, nu: Option<f64>) -> Result<Option<f64>> {
        match (self.has_nu(), nu) {
            (true, Some(v)) if v.is_finite() && v > 2.0 => Ok(Some(v)),
            (true, Some(v)) => Err(Error::Domain(format!("nu={v} must be finite and > 2"))),
            (true, None) => Err(Error::Domain(format!("{} needs nu", self.name()))),
            (false, _) => Ok(None),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal_scale" | "garch" => Ok(Family::NormalScale),
            "student_t_scale" | "t_gas" => Ok(Family::StudentTScale),
            "student_t_copula" | "t_copula" => Ok(Family::StudentTCopula),
            "exp_duration" | "acd" => Ok(Family::ExpDuration),
            other => Err(Error::Config(format!("unknown family `{other}`"))),
        }
    }
}

/// A single observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Obs {
    Scalar(f64),
    Pair(f64, f64),
}

/// Copula auxiliary quantities at one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CopulaAux {
    /// w = (ν+2)/(ν−2+x'Σ⁻¹x)
    pub w: f64,
    /// g = (ν+2)/(ν+4)
    pub g: f64,
    pub x1: f64,
    pub x2: f64,
}

pub fn rho_from_tilde(rho_tilde: f64) -> f64 {
    (0.5 * rho_tilde).tanh()
}

pub fn tilde_from_rho(rho: f64) -> f64 {
    2.0 * rho.atanh()
}

/// Unit-variance Student-t quantile used for the copula margins.
pub fn copula_quantile(u: f64, nu: f64) -> f64 {
    ((nu - 2.0) / nu).sqrt() * special::student_t_quantile(special::clamp_unit(u), nu)
}

pub fn copula_aux(u: (f64, f64), rho_tilde: f64, nu: f64) -> Result<CopulaAux> {
    check_unit_pair(u)?;
    if !(nu > 2.0) {
        return Err(Error::Domain(format!("nu={nu} must exceed 2")));
    }
    let rho = rho_from_tilde(rho_tilde);
    if !(rho.abs() < 1.0) {
        return Err(Error::Degenerate(format!("|rho| = 1 at rho_tilde={rho_tilde}")));
    }
    let x1 = copula_quantile(u.0, nu);
    let x2 = copula_quantile(u.1, nu);
    let q = (x1 * x1 + x2 * x2 - 2.0 * rho * x1 * x2) / (1.0 - rho * rho);
    Ok(CopulaAux {
        w: (nu + 2.0) / (nu - 2.0 + q),
        g: (nu + 2.0) / (nu + 4.0),
        x1,
        x2,
    })
}

fn check_unit_pair(u: (f64, f64)) -> Result<()> {
    if u.0 > 0.0 && u.0 < 1.0 && u.1 > 0.0 && u.1 < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("copula input ({}, {}) outside (0,1)^2", u.0, u.1)))
    }
}

fn check_obs(family: Family, y: Obs) -> Result<()> {
    match (family, y) {
        (Family::StudentTCopula, Obs::Pair(a, b)) => check_unit_pair((a, b)),
        (Family::StudentTCopula, Obs::Scalar(_)) => {
            Err(Error::Domain("copula needs a pair of PITs".into()))
        }
        (_, Obs::Pair(..)) => Err(Error::Domain(format!("{} takes scalar observations", family))),
        (Family::ExpDuration, Obs::Scalar(v)) if !(v > 0.0 && v.is_finite()) => {
            Err(Error::Domain(format!("duration {v} must be positive")))
        }
        (_, Obs::Scalar(v)) if !v.is_finite() => Err(Error::Domain("non-finite observation".into())),
        _ => Ok(()),
    }
}

fn point(family: Family, y: Obs, f: f64, nu: Option<f64>) -> Result<Point> {
    check_obs(family, y)?;
    family.check_state(f)?;
    let nu = family.check_nu(nu)?;
    let p = match y {
        Obs::Scalar(v) => kernel::scalar_point(family, v, f, nu.unwrap_or(f64::INFINITY)),
        Obs::Pair(a, b) => {
            let nu = nu.expect("checked");
            let c = kernel::CopulaConsts::new(nu);
            let prepared = c.prepare([a, b]);
            c.point(&prepared, f)
        }
    };
    Ok(p)
}

/// Log density log p(y; f, ν).
pub fn log_density(family: Family, y: Obs, f: f64, nu: Option<f64>) -> Result<f64> {
    Ok(point(family, y, f, nu)?.ll)
}

/// Inverse-information scaled score s = I⁻¹ ∂log p/∂f.
pub fn scaled_score(family: Family, y: Obs, f: f64, nu: Option<f64>) -> Result<f64> {
    Ok(point(family, y, f, nu)?.s)
}

/// Unscaled score ∂log p/∂f.
pub fn raw_score(family: Family, y: Obs, f: f64, nu: Option<f64>) -> Result<f64> {
    Ok(point(family, y, f, nu)?.score)
}

/// Conditional Fisher information of `f`, E[(∂log p/∂f)²].
pub fn information(family: Family, f: f64, nu: Option<f64>) -> Result<f64> {
    family.check_state(f)?;
    let nu = family.check_nu(nu)?;
    Ok(match family {
        Family::NormalScale => 0.5 / (f * f),
        Family::StudentTScale => {
            let nu = nu.expect("checked");
            nu / (2.0 * (nu + 3.0) * f * f)
        }
        Family::ExpDuration => 1.0 / (f * f),
        Family::StudentTCopula => {
            let nu = nu.expect("checked");
            let g = (nu + 2.0) / (nu + 4.0);
            let rho = rho_from_tilde(f);
            0.25 * (g + (2.0 * g - 1.0) * rho * rho)
        }
    })
}

/// Forward PIT for the scale families, clamped to [1e-12, 1 − 1e-12].
pub fn pit(family: Family, y: Obs, f: f64, nu: Option<f64>) -> Result<f64> {
    check_obs(family, y)?;
    family.check_state(f)?;
    let nu = family.check_nu(nu)?;
    let Obs::Scalar(y) = y else {
        return Err(Error::Domain("pit needs a scalar observation".into()));
    };
    let u = match family {
        Family::NormalScale => special::normal_cdf(y / f.sqrt()),
        Family::StudentTScale => {
            let nu = nu.expect("checked");
            special::student_t_cdf(y / f.sqrt() * (nu / (nu - 2.0)).sqrt(), nu)
        }
        _ => {
            return Err(Error::Domain(format!(
                "pit is defined for scale families, not {family}"
            )))
        }
    };
    Ok(special::clamp_unit(u))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn normal_at_mode() {
        let v = log_density(Family::NormalScale, Obs::Scalar(0.0), 1.0, None).unwrap();
        assert!(close(v, -0.918_938_533_204_672_8, 1e-14));
    }

    #[test]
    fn exp_at_mean() {
        let v = log_density(Family::ExpDuration, Obs::Scalar(1.0), 1.0, None).unwrap();
        assert!(close(v, -1.0, 1e-15));
    }

    #[test]
    fn normal_score_vanishes_at_moment() {
        let s = scaled_score(Family::NormalScale, Obs::Scalar(2f64.sqrt()), 2.0, None).unwrap();
        assert!(s.abs() < 1e-14);
    }

    #[test]
    fn t_score_gaussian_limit() {
        let s = scaled_score(Family::StudentTScale, Obs::Scalar(2.0), 1.0, Some(1e8)).unwrap();
        assert!((s - 3.0).abs() < 1e-6, "{s}");
    }

    #[test]
    fn t_score_matches_eq8_bracket() {
        // Literal transcription of the recursion's α-bracket.
        let (y, s2, nu): (f64, f64, f64) = (1.3, 0.7, 5.5);
        let iv = 1.0 / nu;
        let lit = (1.0 + 3.0 * iv)
            * ((1.0 + iv) / (1.0 - 2.0 * iv)
                * (1.0 + iv / (1.0 - 2.0 * iv) * y * y / s2).recip()
                * y
                * y
                - s2);
        let s = scaled_score(Family::StudentTScale, Obs::Scalar(y), s2, Some(nu)).unwrap();
        assert!(close(s, lit, 1e-13));
    }

    #[test]
    fn copula_score_zero_at_center() {
        for &nu in &[2.5, 6.0, 50.0] {
            let s = scaled_score(Family::StudentTCopula, Obs::Pair(0.5, 0.5), 0.0, Some(nu)).unwrap();
            assert!(s.abs() < 1e-15);
        }
    }

    #[test]
    fn copula_gaussian_limit_at_zero_rho() {
        let u = (0.3, 0.8);
        let s = scaled_score(Family::StudentTCopula, Obs::Pair(u.0, u.1), 0.0, Some(1e8)).unwrap();
        let x1 = special::normal_quantile(u.0);
        let x2 = special::normal_quantile(u.1);
        assert!((s - 2.0 * x1 * x2).abs() < 1e-5, "{s} vs {}", 2.0 * x1 * x2);
    }

    #[test]
    fn copula_independence_density_is_one() {
        // ν → ∞ and ρ = 0: the t copula collapses to the independence copula.
        let v = log_density(Family::StudentTCopula, Obs::Pair(0.2, 0.9), 0.0, Some(1e8)).unwrap();
        assert!(v.abs() < 1e-6);
    }

    #[test]
    fn pit_examples() {
        let u = pit(Family::StudentTScale, Obs::Scalar(0.0), 1.3, Some(5.0)).unwrap();
        assert_eq!(u, 0.5);
        let u = pit(Family::NormalScale, Obs::Scalar(1.0), 1.0, None).unwrap();
        assert!((u - 0.841_344_746_068_542_9).abs() < 1e-12);
        // Unit-variance t: y/σ = 1 is t-quantile sqrt(3) for ν = 3.
        let u = pit(Family::StudentTScale, Obs::Scalar(1.0), 1.0, Some(3.0)).unwrap();
        let x: f64 = 3f64.sqrt();
        let s3 = 3f64.sqrt();
        let exact = 0.5
            + (x / (s3 * (1.0 + x * x / 3.0)) + (x / s3).atan()) / std::f64::consts::PI;
        assert!((u - exact).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(log_density(Family::ExpDuration, Obs::Scalar(0.0), 1.0, None).is_err());
        assert!(log_density(Family::NormalScale, Obs::Scalar(0.0), -1.0, None).is_err());
        assert!(log_density(Family::StudentTScale, Obs::Scalar(0.0), 1.0, Some(2.0)).is_err());
        assert!(log_density(Family::StudentTCopula, Obs::Pair(0.0, 0.5), 0.0, Some(5.0)).is_err());
        assert!(pit(Family::ExpDuration, Obs::Scalar(1.0), 1.0, None).is_err());
    }

    #[test]
    fn information_gaussian_copula_limit() {
        // I_ρ̃ → (1+ρ²)/4 for ν → ∞.
        let i = information(Family::StudentTCopula, 0.6, Some(1e9)).unwrap();
        let r = rho_from_tilde(0.6);
        assert!(close(i, 0.25 * (1.0 + r * r), 1e-8));
    }
}
