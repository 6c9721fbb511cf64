//! Per-observation evaluation kernels used by the filter's inner loop.
//!
//! A kernel binds a family, its static parameter and the data, and returns
//! for a given `f` the log density, raw score, scaled score and the
//! derivative of the scaled score with respect to `f` (needed for the
//! analytic likelihood gradient).

use statrs::function::gamma::ln_gamma;

use super::{copula_quantile, rho_from_tilde, Family};
use crate::error::{Error, Result};
use crate::series::SeriesView;
use crate::special::LN_2PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Point {
    pub ll: f64,
    /// ∂log p/∂f
    pub score: f64,
    /// scaled score
    pub s: f64,
    /// ∂s/∂f
    pub ds: f64,
}

pub(crate) trait Kernel: Sync {
    fn len(&self) -> usize;
    /// Log density and scaled score. Returns a NaN log density when `f` is
    /// outside the state space.
    fn ll_s(&self, t: usize, f: f64) -> (f64, f64);
    fn point(&self, t: usize, f: f64) -> Point;
}

const NAN_POINT: Point = Point {
    ll: f64::NAN,
    score: f64::NAN,
    s: f64::NAN,
    ds: f64::NAN,
};

pub(crate) struct NormalKernel<'a> {
    y: &'a [f64],
}

impl Kernel for NormalKernel<'_> {
    fn len(&self) -> usize {
        self.y.len()
    }

    #[inline]
    fn ll_s(&self, t: usize, f: f64) -> (f64, f64) {
        if !(f > 0.0) {
            return (f64::NAN, f64::NAN);
        }
        let y2 = self.y[t] * self.y[t];
        (-0.5 * (LN_2PI + f.ln() + y2 / f), y2 - f)
    }

    #[inline]
    fn point(&self, t: usize, f: f64) -> Point {
        normal_point(self.y[t], f)
    }
}

fn normal_point(y: f64, f: f64) -> Point {
    if !(f > 0.0) {
        return NAN_POINT;
    }
    let y2 = y * y;
    Point {
        ll: -0.5 * (LN_2PI + f.ln() + y2 / f),
        score: (y2 - f) / (2.0 * f * f),
        s: y2 - f,
        ds: -1.0,
    }
}

pub(crate) struct StudentConsts {
    nu: f64,
    /// ν − 2
    k: f64,
    /// 1 + 3/ν
    a: f64,
    ln_c: f64,
}

impl StudentConsts {
    pub fn new(nu: f64) -> Self {
        let k = nu - 2.0;
        Self {
            nu,
            k,
            a: 1.0 + 3.0 / nu,
            ln_c: ln_gamma(0.5 * (nu + 1.0))
                - ln_gamma(0.5 * nu)
                - 0.5 * (k * std::f64::consts::PI).ln(),
        }
    }

    #[inline]
    fn ll_s(&self, y: f64, f: f64) -> (f64, f64) {
        if !(f > 0.0) {
            return (f64::NAN, f64::NAN);
        }
        let y2 = y * y;
        let kf = self.k * f;
        let ll = self.ln_c - 0.5 * f.ln() - 0.5 * (self.nu + 1.0) * (y2 / kf).ln_1p();
        let s = self.a * ((self.nu + 1.0) * f * y2 / (kf + y2) - f);
        (ll, s)
    }

    #[inline]
    fn point(&self, y: f64, f: f64) -> Point {
        if !(f > 0.0) {
            return NAN_POINT;
        }
        let (ll, s) = self.ll_s(y, f);
        let y2 = y * y;
        let d = self.k * f + y2;
        Point {
            ll,
            score: -0.5 / f + 0.5 * (self.nu + 1.0) * y2 / (f * d),
            s,
            ds: self.a * ((self.nu + 1.0) * y2 * y2 / (d * d) - 1.0),
        }
    }
}

pub(crate) struct StudentKernel<'a> {
    y: &'a [f64],
    c: StudentConsts,
}

impl Kernel for StudentKernel<'_> {
    fn len(&self) -> usize {
        self.y.len()
    }

    #[inline]
    fn ll_s(&self, t: usize, f: f64) -> (f64, f64) {
        self.c.ll_s(self.y[t], f)
    }

    #[inline]
    fn point(&self, t: usize, f: f64) -> Point {
        self.c.point(self.y[t], f)
    }
}

pub(crate) struct ExpKernel<'a> {
    y: &'a [f64],
}

fn exp_point(y: f64, f: f64) -> Point {
    if !(f > 0.0) {
        return NAN_POINT;
    }
    Point {
        ll: -f.ln() - y / f,
        score: (y - f) / (f * f),
        s: y - f,
        ds: -1.0,
    }
}

impl Kernel for ExpKernel<'_> {
    fn len(&self) -> usize {
        self.y.len()
    }

    #[inline]
    fn ll_s(&self, t: usize, f: f64) -> (f64, f64) {
        if !(f > 0.0) {
            return (f64::NAN, f64::NAN);
        }
        let y = self.y[t];
        (-f.ln() - y / f, y - f)
    }

    #[inline]
    fn point(&self, t: usize, f: f64) -> Point {
        exp_point(self.y[t], f)
    }
}

/// Copula observation after quantile transformation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CopulaObs {
    x1: f64,
    x2: f64,
    /// (ν+1)/2 Σ log(1 + x_i²/(ν−2)), the margin-density correction.
    m: f64,
}

pub(crate) struct CopulaConsts {
    nu: f64,
    g: f64,
    ln_c: f64,
}

impl CopulaConsts {
    pub fn new(nu: f64) -> Self {
        Self {
            nu,
            g: (nu + 2.0) / (nu + 4.0),
            ln_c: ln_gamma(0.5 * (nu + 2.0)) + ln_gamma(0.5 * nu)
                - 2.0 * ln_gamma(0.5 * (nu + 1.0)),
        }
    }

    pub fn prepare(&self, u: [f64; 2]) -> CopulaObs {
        let x1 = copula_quantile(u[0], self.nu);
        let x2 = copula_quantile(u[1], self.nu);
        let k = self.nu - 2.0;
        CopulaObs {
            x1,
            x2,
            m: 0.5 * (self.nu + 1.0) * ((x1 * x1 / k).ln_1p() + (x2 * x2 / k).ln_1p()),
        }
    }

    #[inline]
    fn ll_s(&self, o: &CopulaObs, f: f64) -> (f64, f64) {
        let rho = rho_from_tilde(f);
        let r2 = rho * rho;
        let omr = 1.0 - r2;
        if !(omr > 0.0) {
            return (f64::NAN, f64::NAN);
        }
        let k = self.nu - 2.0;
        let sq = o.x1 * o.x1 + o.x2 * o.x2;
        let cross = o.x1 * o.x2;
        let q = (sq - 2.0 * rho * cross) / omr;
        let ll = self.ln_c - 0.5 * omr.ln() - 0.5 * (self.nu + 2.0) * (q / k).ln_1p() + o.m;
        let w = (self.nu + 2.0) / (k + q);
        let bracket = (w * cross - rho) - rho / (1.0 + r2) * (w * sq - 2.0);
        let p = 2.0 * (1.0 + r2) / (omr * (self.g + (2.0 * self.g - 1.0) * r2));
        (ll, p * bracket)
    }

    pub fn point(&self, o: &CopulaObs, f: f64) -> Point {
        let rho = rho_from_tilde(f);
        let r2 = rho * rho;
        let omr = 1.0 - r2;
        if !(omr > 0.0) {
            return NAN_POINT;
        }
        let g = self.g;
        let k = self.nu - 2.0;
        let sq = o.x1 * o.x1 + o.x2 * o.x2;
        let cross = o.x1 * o.x2;
        let q = (sq - 2.0 * rho * cross) / omr;
        let ll = self.ln_c - 0.5 * omr.ln() - 0.5 * (self.nu + 2.0) * (q / k).ln_1p() + o.m;
        let w = (self.nu + 2.0) / (k + q);
        let bracket = (w * cross - rho) - rho / (1.0 + r2) * (w * sq - 2.0);
        let den = g + (2.0 * g - 1.0) * r2;
        let p = 2.0 * (1.0 + r2) / (omr * den);
        let s = p * bracket;
        // ∂ρ/∂ρ̃
        let drho = 0.5 * omr;
        let score_rho = (1.0 + r2) / (omr * omr) * bracket;

        let dq = (-2.0 * cross * omr + 2.0 * rho * (sq - 2.0 * rho * cross)) / (omr * omr);
        let dw = -w * w / (self.nu + 2.0) * dq;
        let dbracket = dw * cross - 1.0
            - (1.0 - r2) / ((1.0 + r2) * (1.0 + r2)) * (w * sq - 2.0)
            - rho / (1.0 + r2) * dw * sq;
        let dlnp = 2.0 * rho / (1.0 + r2) + 2.0 * rho / omr - 2.0 * (2.0 * g - 1.0) * rho / den;
        let ds_drho = p * dlnp * bracket + p * dbracket;
        Point {
            ll,
            score: score_rho * drho,
            s,
            ds: ds_drho * drho,
        }
    }
}

pub(crate) struct CopulaKernel {
    c: CopulaConsts,
    obs: Vec<CopulaObs>,
}

impl Kernel for CopulaKernel {
    fn len(&self) -> usize {
        self.obs.len()
    }

    #[inline]
    fn ll_s(&self, t: usize, f: f64) -> (f64, f64) {
        self.c.ll_s(&self.obs[t], f)
    }

    #[inline]
    fn point(&self, t: usize, f: f64) -> Point {
        self.c.point(&self.obs[t], f)
    }
}

pub(crate) fn scalar_point(family: Family, y: f64, f: f64, nu: f64) -> Point {
    match family {
        Family::NormalScale => normal_point(y, f),
        Family::StudentTScale => StudentConsts::new(nu).point(y, f),
        Family::ExpDuration => exp_point(y, f),
        Family::StudentTCopula => unreachable!("copula observations are pairs"),
    }
}

pub(crate) enum KernelBox<'a> {
    Normal(NormalKernel<'a>),
    Student(StudentKernel<'a>),
    Exp(ExpKernel<'a>),
    Copula(CopulaKernel),
}

/// Runs `$body` with `$k` bound to the concrete kernel inside `$kb`.
macro_rules! with_kernel {
    ($kb:expr, $k:ident => $body:expr) => {
        match $kb {
            $crate::score::KernelBox::Normal($k) => $body,
            $crate::score::KernelBox::Student($k) => $body,
            $crate::score::KernelBox::Exp($k) => $body,
            $crate::score::KernelBox::Copula($k) => $body,
        }
    };
}
pub(crate) use with_kernel;

pub(crate) fn build_kernel<'a>(
    family: Family,
    y: SeriesView<'a>,
    nu: Option<f64>,
) -> Result<KernelBox<'a>> {
    let nu = family.check_nu(nu)?;
    match (family, y) {
        (Family::StudentTCopula, SeriesView::Bivariate(u)) => {
            let c = CopulaConsts::new(nu.expect("checked"));
            let mut obs = Vec::with_capacity(u.len());
            for (t, pair) in u.iter().enumerate() {
                if !(pair[0] > 0.0 && pair[0] < 1.0 && pair[1] > 0.0 && pair[1] < 1.0) {
                    return Err(Error::Domain(format!(
                        "copula input at t={t} ({}, {}) outside (0,1)^2",
                        pair[0], pair[1]
                    )));
                }
                obs.push(c.prepare(*pair));
            }
            Ok(KernelBox::Copula(CopulaKernel { c, obs }))
        }
        (Family::StudentTCopula, SeriesView::Univariate(_)) => {
            Err(Error::Domain("copula needs bivariate PIT data".into()))
        }
        (_, SeriesView::Bivariate(_)) => Err(Error::Domain(format!(
            "{family} needs univariate data"
        ))),
        (_, SeriesView::Univariate(y)) => {
            if let Some(t) = y.iter().position(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("non-finite observation at t={t}")));
            }
            match family {
                Family::NormalScale => Ok(KernelBox::Normal(NormalKernel { y })),
                Family::StudentTScale => Ok(KernelBox::Student(StudentKernel {
                    y,
                    c: StudentConsts::new(nu.expect("checked")),
                })),
                Family::ExpDuration => {
                    if let Some(t) = y.iter().position(|&v| !(v > 0.0)) {
                        return Err(Error::Domain(format!(
                            "duration at t={t} is {} but must be positive",
                            y[t]
                        )));
                    }
                    Ok(KernelBox::Exp(ExpKernel { y }))
                }
                Family::StudentTCopula => unreachable!(),
            }
        }
    }
}
