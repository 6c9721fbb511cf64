//! Seeded simulation from a (possibly regime-switching) GAS model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Exp1, StandardNormal};

use super::{GasParams, ModelSpec};
use crate::error::{Error, Result};
use crate::score::{rho_from_tilde, scaled_score, Family, Obs};
use crate::series::Series;
use crate::special;

/// K independent stationary Gaussian AR(1) state variables with unit
/// variance, named `Z1..ZK`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateGenerator {
    pub k: usize,
    pub phi: f64,
}

impl StateGenerator {
    pub fn new(k: usize, phi: f64) -> Self {
        Self { k, phi }
    }

    pub fn names(&self) -> Vec<String> {
        (1..=self.k).map(|i| format!("Z{i}")).collect()
    }

    /// Row-major T×K draws.
    pub fn generate<R: Rng>(&self, t: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let innov = (1.0 - self.phi * self.phi).max(0.0).sqrt();
        let mut prev: Vec<f64> = (0..self.k).map(|_| rng.sample(StandardNormal)).collect();
        let mut out = Vec::with_capacity(t);
        for _ in 0..t {
            for z in prev.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *z = self.phi * *z + innov * e;
            }
            out.push(prev.clone());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub y: Series,
    /// State variables, one row per period.
    pub z: Vec<Vec<f64>>,
    pub names: Vec<String>,
    /// True parameter path f_t.
    pub f: Vec<f64>,
    /// True conditional variance for the scale families.
    pub proxy: Option<Vec<f64>>,
}

const BURN_IN: usize = 200;

/// Simulates `t` observations. `route` maps a row of state variables to the
/// leaf whose block drives the update at that period; the filter starts at
/// the long-run level of leaf 0 and runs a short burn-in that is discarded.
pub fn simulate<F>(
    spec: &ModelSpec,
    params: &GasParams,
    route: F,
    t: usize,
    seed: u64,
    zgen: &StateGenerator,
) -> Result<SimulatedData>
where
    F: Fn(&[f64]) -> usize,
{
    spec.validate()?;
    params.validate(spec.family)?;
    let family = spec.family;
    let mut z_rng = ChaCha8Rng::seed_from_u64(seed);
    z_rng.set_stream(0);
    let mut y_rng = ChaCha8Rng::seed_from_u64(seed);
    y_rng.set_stream(1);

    let z = zgen.generate(t + BURN_IN, &mut z_rng);
    let nu = params.nu.unwrap_or(f64::INFINITY);
    let chi = if family.has_nu() {
        Some(ChiSquared::new(nu).map_err(|e| Error::InvalidParams(e.to_string()))?)
    } else {
        None
    };

    let mut f = params.leaves[0].long_run(family);
    let mut s_prev = 0.0;
    let mut ys = Vec::with_capacity(t);
    let mut pairs = Vec::with_capacity(if family.is_bivariate() { t } else { 0 });
    let mut f_path = Vec::with_capacity(t);
    for (i, row) in z.iter().enumerate() {
        if i > 0 {
            let leaf = route(row);
            let block = params.leaves.get(leaf).ok_or_else(|| {
                Error::InvalidParams(format!("router returned leaf {leaf} of {}", params.leaves.len()))
            })?;
            let c = block.coeffs(family);
            f = c.omega + c.b * f + c.a * s_prev;
        }
        family
            .check_state(f)
            .map_err(|_| Error::FilterDivergence { t: i.saturating_sub(BURN_IN) })?;
        let obs = match family {
            Family::NormalScale => {
                let e: f64 = y_rng.sample(StandardNormal);
                Obs::Scalar(f.sqrt() * e)
            }
            Family::StudentTScale => {
                let e: f64 = y_rng.sample(StandardNormal);
                let w = y_rng.sample(chi.as_ref().expect("has nu")) / nu;
                Obs::Scalar((f * (nu - 2.0) / nu).sqrt() * e / w.sqrt())
            }
            Family::ExpDuration => {
                let e: f64 = y_rng.sample(Exp1);
                Obs::Scalar(f * e)
            }
            Family::StudentTCopula => {
                let rho = rho_from_tilde(f);
                let e1: f64 = y_rng.sample(StandardNormal);
                let e2: f64 = y_rng.sample(StandardNormal);
                let w = (y_rng.sample(chi.as_ref().expect("has nu")) / nu).sqrt();
                let x1 = e1 / w;
                let x2 = (rho * e1 + (1.0 - rho * rho).sqrt() * e2) / w;
                Obs::Pair(
                    special::clamp_unit(special::student_t_cdf(x1, nu)),
                    special::clamp_unit(special::student_t_cdf(x2, nu)),
                )
            }
        };
        s_prev = scaled_score(family, obs, f, params.nu)?;
        if i >= BURN_IN {
            match obs {
                Obs::Scalar(v) => ys.push(v),
                Obs::Pair(a, b) => pairs.push([a, b]),
            }
            f_path.push(f);
        }
    }
    let proxy = matches!(family, Family::NormalScale | Family::StudentTScale).then(|| f_path.clone());
    Ok(SimulatedData {
        y: if family.is_bivariate() {
            Series::Bivariate(pairs)
        } else {
            Series::Univariate(ys)
        },
        z: z[BURN_IN..].to_vec(),
        names: zgen.names(),
        f: f_path,
        proxy,
    })
}
