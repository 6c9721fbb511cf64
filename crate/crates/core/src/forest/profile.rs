//! Forest parameters averaged within percentile bins of one state variable.

use serde::{Deserialize, Serialize};

use super::{forest_filter, GasForest};
use crate::engine::LeafParams;
use crate::error::{Error, Result};
use crate::evaluation::into_string;
use crate::score::{rho_from_tilde, Family};
use crate::series::SeriesView;
use crate::tree::{sorted_quantiles, QuantileGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// ω/(1−α−β) in GARCH form, ω/(1−β) otherwise.
    LongRun,
    /// α+β in GARCH form, β otherwise.
    Persistence,
    Alpha,
    /// The averaged one-step forecast on its natural scale (ρ for the copula).
    Forecast,
}

impl std::str::FromStr for Transform {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "long_run" => Ok(Transform::LongRun),
            "persistence" => Ok(Transform::Persistence),
            "alpha" => Ok(Transform::Alpha),
            "forecast" => Ok(Transform::Forecast),
            other => Err(Error::Config(format!("unknown transform `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileBin {
    /// 1-based bin number.
    pub bin: usize,
    /// Upper quantile level of the bin.
    pub quantile: f64,
    /// Mean of the state variable inside the bin; `None` for empty bins.
    pub z_mean: Option<f64>,
    pub value: Option<f64>,
}

const BINS: u32 = 100;

/// Averages the leaf blocks picked by every tree at each period, then
/// averages those within each 1% bin of `variable` and applies `transform`.
pub fn parameter_profile(
    forest: &GasForest,
    y: SeriesView<'_>,
    names: &[String],
    z: &[Vec<f64>],
    f0: f64,
    variable: &str,
    transform: Transform,
) -> Result<Vec<ProfileBin>> {
    let col = names
        .iter()
        .position(|n| n == variable)
        .ok_or_else(|| Error::Config(format!("unknown state variable `{variable}`")))?;
    if z.len() != y.len() {
        return Err(Error::Data(format!("{} state rows for {} observations", z.len(), y.len())));
    }
    let zk: Vec<f64> = z
        .iter()
        .enumerate()
        .map(|(t, row)| {
            row.get(col).copied().filter(|v| !v.is_nan()).ok_or_else(|| Error::MissingState {
                variable: variable.to_string(),
                row: t,
            })
        })
        .collect::<Result<_>>()?;
    let family = forest.family;

    // Per-period quantity to be binned.
    let per_t: Vec<f64> = if transform == Transform::Forecast {
        let out = forest_filter(forest, y, names, z, f0)?;
        out.f
            .iter()
            .map(|&f| if family == Family::StudentTCopula { rho_from_tilde(f) } else { f })
            .collect()
    } else {
        // Leaf blocks averaged across trees; the transform comes after
        // bin averaging, so keep the three coefficients.
        let routes: Vec<Vec<u32>> = forest
            .trees
            .iter()
            .map(|ft| ft.tree.route_all(names, z))
            .collect::<Result<_>>()?;
        let b = forest.trees.len() as f64;
        let mut avg = vec![[0.0f64; 3]; y.len()];
        for (ft, ids) in forest.trees.iter().zip(&routes) {
            for (acc, &id) in avg.iter_mut().zip(ids) {
                let l = ft.tree.leaves[id as usize];
                acc[0] += l.omega;
                acc[1] += l.beta;
                acc[2] += l.alpha;
            }
        }
        return finish(&zk, avg.iter().map(|a| a.map(|v| v / b)).collect(), |a| {
            let l = LeafParams::new(a[0], a[1], a[2]);
            match transform {
                Transform::LongRun => l.long_run(family),
                Transform::Persistence => l.persistence(family),
                _ => l.alpha,
            }
        });
    };
    finish(&zk, per_t.into_iter().map(|v| [v, 0.0, 0.0]).collect(), |a| a[0])
}

fn finish(zk: &[f64], values: Vec<[f64; 3]>, apply: impl Fn([f64; 3]) -> f64) -> Result<Vec<ProfileBin>> {
    let mut sorted = zk.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges = sorted_quantiles(
        &sorted,
        &QuantileGrid {
            den: BINS,
            nums: (1..BINS).collect(),
        },
    );
    let nb = BINS as usize;
    let mut sum = vec![[0.0f64; 3]; nb];
    let mut zsum = vec![0.0; nb];
    let mut count = vec![0usize; nb];
    for (&zv, v) in zk.iter().zip(&values) {
        // Bin = number of edges strictly below z, so ties at an edge fall
        // into the lower bin, as with tree splits.
        let bin = edges.partition_point(|&e| e < zv);
        for i in 0..3 {
            sum[bin][i] += v[i];
        }
        zsum[bin] += zv;
        count[bin] += 1;
    }
    Ok((0..nb)
        .map(|i| {
            let c = count[i] as f64;
            ProfileBin {
                bin: i + 1,
                quantile: (i + 1) as f64 / BINS as f64,
                z_mean: (count[i] > 0).then(|| zsum[i] / c),
                value: (count[i] > 0).then(|| apply(sum[i].map(|s| s / c))),
            }
        })
        .collect())
}

pub fn profile_csv(bins: &[ProfileBin]) -> Result<String> {
    let na = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin", "quantile", "z_mean", "value"])?;
    for b in bins {
        w.write_record([b.bin.to_string(), b.quantile.to_string(), na(b.z_mean), na(b.value)])?;
    }
    into_string(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::GasParams;
    use crate::forest::{BootstrapPlan, ForestTree};
    use crate::series::Series;
    use crate::tree::RegimeTree;

    fn forest(trees: Vec<RegimeTree>) -> GasForest {
        GasForest {
            family: Family::NormalScale,
            plan: BootstrapPlan::default(),
            max_depth: 1,
            trees: trees
                .into_iter()
                .enumerate()
                .map(|(i, tree)| ForestTree {
                    index: i,
                    seed: 0,
                    features: vec![],
                    tree,
                })
                .collect(),
            dropped: vec![],
        }
    }

    fn data(n: usize) -> (Series, Vec<String>, Vec<Vec<f64>>) {
        let y = Series::Univariate((0..n).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5).collect());
        let z = (0..n).map(|i| vec![((i * 37) % n) as f64]).collect();
        (y, vec!["Z1".to_string()], z)
    }

    #[test]
    fn single_leaf_forest_is_flat() {
        let p = GasParams::single(LeafParams::new(0.05, 0.9, 0.05), None);
        let f = forest(vec![RegimeTree::single(Family::NormalScale, &p)]);
        let (y, names, z) = data(1000);
        let bins = parameter_profile(&f, y.view(), &names, &z, 1.0, "Z1", Transform::LongRun).unwrap();
        assert_eq!(bins.len(), 100);
        for b in &bins {
            assert!((b.value.unwrap() - 1.0).abs() < 1e-12);
        }
        let csv = profile_csv(&bins).unwrap();
        assert_eq!(csv.lines().count(), 101);
    }

    #[test]
    fn step_at_threshold() {
        let p = GasParams::single(LeafParams::new(0.05, 0.9, 0.05), None);
        let mut t = RegimeTree::single(Family::NormalScale, &p);
        t.split_leaf(0, "Z1", 299.5, LeafParams::new(0.05, 0.8, 0.15));
        let f = forest(vec![t]);
        let (y, names, z) = data(1000);
        let bins = parameter_profile(&f, y.view(), &names, &z, 1.0, "Z1", Transform::Alpha).unwrap();
        assert!(bins[..30].iter().all(|b| (b.value.unwrap() - 0.05).abs() < 1e-15));
        assert!(bins[30..].iter().all(|b| (b.value.unwrap() - 0.15).abs() < 1e-15));
    }

    #[test]
    fn empty_bins_are_missing() {
        let p = GasParams::single(LeafParams::new(0.05, 0.9, 0.05), None);
        let f = forest(vec![RegimeTree::single(Family::NormalScale, &p)]);
        let (y, names, _) = data(50);
        let z: Vec<Vec<f64>> = (0..50).map(|i| vec![(i % 2) as f64]).collect();
        let bins = parameter_profile(&f, y.view(), &names, &z, 1.0, "Z1", Transform::Persistence).unwrap();
        assert!(bins.iter().any(|b| b.value.is_none()));
        assert!(profile_csv(&bins).unwrap().contains("NA"));
    }
}
