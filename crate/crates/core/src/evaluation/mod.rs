//! Out-of-sample losses, Diebold–Mariano tests and report tables.

mod importance;
mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::Family;

pub use importance::{forest_test_losses, variable_importance};
pub use report::{emit_report, parse_report_csv, Report, ReportRow};

/// Default number of Newey–West lags.
pub const NW_LAGS: usize = 10;
/// Long-run variances at or below this are treated as degenerate.
pub const VARIANCE_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Qlike,
    Nll,
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qlike" => Ok(LossKind::Qlike),
            "nll" | "neg_loglik" => Ok(LossKind::Nll),
            other => Err(Error::Config(format!("unknown loss `{other}`"))),
        }
    }
}

/// QLIKE in its zero-minimized form proxy/h − ln(proxy/h) − 1.
pub fn qlike(proxy: f64, h: f64) -> Result<f64> {
    if !(proxy > 0.0 && h > 0.0) || !proxy.is_finite() || !h.is_finite() {
        return Err(Error::Domain(format!("qlike needs positive inputs, got proxy={proxy}, h={h}")));
    }
    let r = proxy / h;
    Ok(r - r.ln() - 1.0)
}

pub fn nll(loglik: f64) -> f64 {
    -loglik
}

/// Per-period losses of a filtered model. `f` is the one-step-ahead state
/// (the variance forecast for the scale families).
pub fn losses(
    kind: LossKind,
    family: Family,
    f: &[f64],
    loglik: &[f64],
    proxy: Option<&[f64]>,
) -> Result<Vec<f64>> {
    match kind {
        LossKind::Nll => Ok(loglik.iter().map(|&l| nll(l)).collect()),
        LossKind::Qlike => {
            if !matches!(family, Family::NormalScale | Family::StudentTScale) {
                return Err(Error::Config(format!("qlike is defined for variance models, not {family}")));
            }
            let proxy = proxy.ok_or_else(|| Error::Config("qlike needs a proxy column".into()))?;
            if proxy.len() != f.len() {
                return Err(Error::Data("proxy and forecast lengths differ".into()));
            }
            proxy.iter().zip(f).map(|(&p, &h)| qlike(p, h)).collect()
        }
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Bartlett-kernel long-run variance γ₀ + 2 Σ (1 − l/(L+1)) γ_l with 1/n
/// autocovariances, before any flooring.
pub fn newey_west_lrv(d: &[f64], lags: usize) -> Result<f64> {
    let n = d.len();
    if n < lags + 2 {
        return Err(Error::Data(format!("{n} observations are too few for {lags} lags")));
    }
    let m = mean(d);
    let dev: Vec<f64> = d.iter().map(|x| x - m).collect();
    let gamma = |l: usize| dev[l..].iter().zip(&dev).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let mut lrv = gamma(0);
    for l in 1..=lags {
        lrv += 2.0 * (1.0 - l as f64 / (lags as f64 + 1.0)) * gamma(l);
    }
    Ok(lrv)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    /// `None` when the long-run variance is degenerate.
    pub t_stat: Option<f64>,
    pub mean_loss_diff: f64,
    pub nw_variance: f64,
    pub n: usize,
}

impl DmResult {
    /// Standard error of the mean loss differential.
    pub fn std_error(&self) -> f64 {
        (self.nw_variance.max(VARIANCE_FLOOR) / self.n as f64).sqrt()
    }
}

/// Diebold–Mariano test on d = loss_a − loss_b; a negative statistic means
/// model a has the lower average loss.
pub fn dm_test(loss_a: &[f64], loss_b: &[f64], lags: usize) -> Result<DmResult> {
    if loss_a.len() != loss_b.len() {
        return Err(Error::Data(format!(
            "loss series differ in length ({} vs {})",
            loss_a.len(),
            loss_b.len()
        )));
    }
    let d: Vec<f64> = loss_a.iter().zip(loss_b).map(|(a, b)| a - b).collect();
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("non-finite loss differential".into()));
    }
    let n = d.len();
    let lrv = newey_west_lrv(&d, lags)?;
    let m = mean(&d);
    let t_stat = (lrv > VARIANCE_FLOOR).then(|| m / (lrv / n as f64).sqrt());
    Ok(DmResult {
        t_stat,
        mean_loss_diff: m,
        nw_variance: lrv.max(0.0),
        n,
    })
}

/// Leave-one-out importance of one variable: mean loss difference
/// (reduced − full) with a DM-based 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub variable: String,
    pub delta_loss: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn importance_entry(variable: &str, reduced: &[f64], full: &[f64]) -> Result<Importance> {
    let dm = dm_test(reduced, full, NW_LAGS)?;
    let half = 1.959_963_984_540_054 * if dm.t_stat.is_some() { dm.std_error() } else { 0.0 };
    Ok(Importance {
        variable: variable.to_string(),
        delta_loss: dm.mean_loss_diff,
        ci_low: dm.mean_loss_diff - half,
        ci_high: dm.mean_loss_diff + half,
    })
}

pub fn importance_csv(rows: &[Importance]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variable", "delta_loss", "ci_low", "ci_high"])?;
    for r in rows {
        w.write_record([
            r.variable.clone(),
            r.delta_loss.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
        ])?;
    }
    into_string(w)
}

pub(crate) fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Data(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn qlike_examples() {
        assert_eq!(qlike(0.4, 0.4).unwrap(), 0.0);
        assert!((qlike(2.0, 1.0).unwrap() - 0.306_852_819_440_054_7).abs() < 1e-12);
        assert!((qlike(1.0, 2.0).unwrap() - 0.193_147_180_559_945_3).abs() < 1e-12);
        assert!(qlike(0.0, 1.0).is_err());
    }

    #[test]
    fn nll_examples() {
        assert_eq!(nll(-1.0), 1.0);
        assert!((nll(-0.5 * crate::special::LN_2PI) - 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn lrv_zero_lags_is_sample_variance() {
        let d = [1.0, 4.0, -2.0, 0.5, 3.0];
        let m = mean(&d);
        let v = d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / d.len() as f64;
        assert!((newey_west_lrv(&d, 0).unwrap() - v).abs() < 1e-15);
        assert_eq!(newey_west_lrv(&[2.0; 30], 10).unwrap(), 0.0);
        assert!(newey_west_lrv(&[1.0; 11], 10).is_err());
    }

    #[test]
    fn lrv_iid_and_ma1() {
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let e: Vec<f64> = (0..=n).map(|_| rng.sample(StandardNormal)).collect();
        let iid = &e[1..];
        let lrv = newey_west_lrv(iid, 10).unwrap();
        assert!((lrv - 1.0).abs() < 0.05, "{lrv}");
        // MA(1) with θ = 0.5: γ0 = 1.25, γ1 = 0.5, and the Bartlett weight at
        // lag one is 10/11, so the estimator targets 1.25 + 2·0.5·10/11.
        let ma: Vec<f64> = (1..=n).map(|t| e[t] + 0.5 * e[t - 1]).collect();
        let lrv = newey_west_lrv(&ma, 10).unwrap();
        let target = 1.25 + 10.0 / 11.0;
        assert!((lrv / target - 1.0).abs() < 0.03, "{lrv}");
    }

    #[test]
    fn identical_losses_are_undefined() {
        let a = vec![0.3; 50];
        let r = dm_test(&a, &a, 10).unwrap();
        assert!(r.t_stat.is_none());
    }

    #[test]
    fn dm_sign_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b: Vec<f64> = (0..500).map(|_| 1.0 + rng.random::<f64>()).collect();
        let a: Vec<f64> = b.iter().map(|x| x - 0.2 + 0.01 * rng.random::<f64>()).collect();
        assert!(dm_test(&a, &b, 10).unwrap().t_stat.unwrap() < -2.0);
    }

    proptest! {
        #[test]
        fn qlike_nonnegative(p in 1e-6f64..1e3, h in 1e-6f64..1e3) {
            let l = qlike(p, h).unwrap();
            prop_assert!(l >= 0.0);
            if (p / h - 1.0).abs() > 1e-6 {
                prop_assert!(l > 0.0);
            }
        }

        #[test]
        fn dm_antisymmetric(a in proptest::collection::vec(-5.0f64..5.0, 30..80), shift in -1.0f64..1.0) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x * 0.7 + shift + (i % 3) as f64 * 0.1).collect();
            let ab = dm_test(&a, &b, 10).unwrap();
            let ba = dm_test(&b, &a, 10).unwrap();
            match (ab.t_stat, ba.t_stat) {
                (Some(x), Some(y)) => prop_assert_eq!(x, -y),
                (None, None) => {}
                _ => prop_assert!(false),
            }
        }
    }
}
