//! GAS forests: trees grown on circular-block-bootstrap resamples with random
//! feature subsets, whose filtered paths are averaged.

mod profile;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{self, ModelSpec};
use crate::error::{Error, Result};
use crate::score::Family;
use crate::series::SeriesView;
use crate::tree::{grow, GrowConfig, RegimeTree};

pub use profile::{parameter_profile, profile_csv, ProfileBin, Transform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    CircularBlock,
    /// Every tree sees the sample as is (degenerate configuration).
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapPlan {
    pub block_length: usize,
    pub n_trees: usize,
    pub feature_fraction: f64,
    pub master_seed: u64,
    pub resample: Resample,
}

impl Default for BootstrapPlan {
    fn default() -> Self {
        Self {
            block_length: 100,
            n_trees: 200,
            feature_fraction: 1.0 / 3.0,
            master_seed: 0,
            resample: Resample::CircularBlock,
        }
    }
}

impl BootstrapPlan {
    pub fn validate(&self) -> Result<()> {
        if self.block_length == 0 || self.n_trees == 0 {
            return Err(Error::Config("block length and tree count must be positive".into()));
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "feature fraction {} outside (0, 1]",
                self.feature_fraction
            )));
        }
        Ok(())
    }

    /// Number of state variables each tree may split on.
    pub fn subset_size(&self, k: usize) -> usize {
        // Small tolerance so that e.g. 9 · (1/3) does not round up to 4.
        ((k as f64 * self.feature_fraction - 1e-9).ceil() as usize).clamp(k.min(1), k)
    }
}

/// Concatenated blocks of `block_length` consecutive indices starting at
/// uniform positions, wrapping modulo `t`, truncated to length `t`.
pub fn circular_block_bootstrap_indices(t: usize, block_length: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = block_length.max(1);
    let mut out = Vec::with_capacity(t);
    while out.len() < t {
        let start = rng.random_range(0..t);
        for i in 0..block.min(t - out.len()) {
            out.push((start + i) % t);
        }
    }
    out
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of tree `b` on attempt `attempt` (0 first, 1 for the retry).
pub fn tree_seed(master: u64, b: usize, attempt: usize) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64((b as u64) << 1 | attempt as u64))
}

/// Sort key of a variable for a given tree. Keys depend only on the seed
/// and the variable's name, so dropping one variable leaves the relative
/// order of the others unchanged.
fn priority(seed: u64, name: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    h.finalize().into()
}

/// The `size` state variables with the smallest priority keys, returned in
/// column order.
pub fn feature_subset(seed: u64, names: &[String], state_vars: &[usize], size: usize) -> Vec<usize> {
    let mut keyed: Vec<([u8; 32], usize)> =
        state_vars.iter().map(|&c| (priority(seed, &names[c]), c)).collect();
    keyed.sort();
    let mut out: Vec<usize> = keyed.into_iter().take(size).map(|(_, c)| c).collect();
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestTree {
    pub index: usize,
    pub seed: u64,
    pub features: Vec<String>,
    pub tree: RegimeTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasForest {
    pub family: Family,
    pub plan: BootstrapPlan,
    pub max_depth: usize,
    pub trees: Vec<ForestTree>,
    /// Indices of trees that failed twice and were left out.
    pub dropped: Vec<usize>,
}

/// Fits `plan.n_trees` trees on bootstrap resamples of (y, z).
pub fn fit_forest(
    spec: &ModelSpec,
    y: SeriesView<'_>,
    z: &[Vec<f64>],
    names: &[String],
    state_vars: &[usize],
    plan: &BootstrapPlan,
    cfg: &GrowConfig,
) -> Result<GasForest> {
    plan.validate()?;
    if z.len() != y.len() {
        return Err(Error::Data(format!("{} state rows for {} observations", z.len(), y.len())));
    }
    let owned = y.to_owned();
    let t = y.len();
    let size = plan.subset_size(state_vars.len());

    let fit_one = |b: usize, attempt: usize| -> Result<ForestTree> {
        let seed = tree_seed(plan.master_seed, b, attempt);
        let features = feature_subset(seed, names, state_vars, size);
        let idx: Vec<usize> = match plan.resample {
            Resample::CircularBlock => circular_block_bootstrap_indices(t, plan.block_length, seed),
            Resample::Identity => (0..t).collect(),
        };
        let yb = owned.gather(&idx);
        let zb: Vec<Vec<f64>> = idx.iter().map(|&i| z[i].clone()).collect();
        let out = grow(spec, yb.view(), &zb, names, &features, cfg)?;
        Ok(ForestTree {
            index: b,
            seed,
            features: features.iter().map(|&c| names[c].clone()).collect(),
            tree: out.tree,
        })
    };

    let results: Vec<Option<ForestTree>> = (0..plan.n_trees)
        .into_par_iter()
        .map(|b| match fit_one(b, 0) {
            Ok(tr) => Some(tr),
            Err(e) => {
                log::warn!("tree {b} failed ({e}); retrying with a fresh seed");
                match fit_one(b, 1) {
                    Ok(tr) => Some(tr),
                    Err(e) => {
                        log::warn!("tree {b} dropped: {e}");
                        None
                    }
                }
            }
        })
        .collect();
    let dropped: Vec<usize> = results
        .iter()
        .enumerate()
        .filter_map(|(b, r)| r.is_none().then_some(b))
        .collect();
    if dropped.len() * 10 > plan.n_trees {
        return Err(Error::Config(format!(
            "{} of {} trees failed to fit",
            dropped.len(),
            plan.n_trees
        )));
    }
    Ok(GasForest {
        family: spec.family,
        plan: plan.clone(),
        max_depth: cfg.max_depth,
        trees: results.into_iter().flatten().collect(),
        dropped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestFilter {
    /// Average of the per-tree paths.
    pub f: Vec<f64>,
    pub per_tree: Vec<Vec<f64>>,
    /// Positions (in `forest.trees`) of the trees that entered the average.
    pub used: Vec<usize>,
    pub nu: Option<f64>,
    /// Log densities at the averaged path and averaged ν.
    pub loglik: Vec<f64>,
}

/// Filters the original series with every tree and averages the paths.
/// Trees whose filter diverges are left out with a warning.
pub fn forest_filter(
    forest: &GasForest,
    y: SeriesView<'_>,
    names: &[String],
    z: &[Vec<f64>],
    f0: f64,
) -> Result<ForestFilter> {
    let paths: Vec<Result<Vec<f64>>> = forest
        .trees
        .par_iter()
        .map(|ft| ft.tree.filter(y, names, z, f0).map(|o| o.f))
        .collect();
    let mut per_tree = Vec::new();
    let mut used = Vec::new();
    for (i, p) in paths.into_iter().enumerate() {
        match p {
            Ok(f) => {
                per_tree.push(f);
                used.push(i);
            }
            Err(Error::FilterDivergence { t }) => {
                log::warn!("tree {} diverged at t={t}; left out of the average", forest.trees[i].index);
            }
            Err(e) => return Err(e),
        }
    }
    if per_tree.is_empty() {
        return Err(Error::Estimation("no tree produced a finite path".into()));
    }
    let n = y.len();
    let b = per_tree.len() as f64;
    let mut f = vec![0.0; n];
    for p in &per_tree {
        for (acc, v) in f.iter_mut().zip(p) {
            *acc += v;
        }
    }
    f.iter_mut().for_each(|v| *v /= b);
    let nu = if forest.family.has_nu() {
        let s: f64 = used.iter().map(|&i| forest.trees[i].tree.nu.unwrap_or(f64::NAN)).sum();
        Some(s / b)
    } else {
        None
    };
    let loglik = engine::loglik_path(forest.family, y, &f, nu)?;
    Ok(ForestFilter {
        f,
        per_tree,
        used,
        nu,
        loglik,
    })
}

/// Manifest entry for one tree file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTree {
    pub index: usize,
    pub seed: u64,
    pub features: Vec<String>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestManifest {
    pub family: Family,
    pub plan: BootstrapPlan,
    pub max_depth: usize,
    pub trees: Vec<ManifestTree>,
    pub dropped: Vec<usize>,
}

pub fn tree_file_name(index: usize) -> String {
    format!("tree_{index:04}.json")
}

impl GasForest {
    pub fn manifest(&self) -> ForestManifest {
        ForestManifest {
            family: self.family,
            plan: self.plan.clone(),
            max_depth: self.max_depth,
            trees: self
                .trees
                .iter()
                .map(|t| ManifestTree {
                    index: t.index,
                    seed: t.seed,
                    features: t.features.clone(),
                    file: tree_file_name(t.index),
                })
                .collect(),
            dropped: self.dropped.clone(),
        }
    }

    /// Reassembles a forest from its manifest and a loader for tree files.
    pub fn from_manifest(
        m: ForestManifest,
        mut load: impl FnMut(&str) -> Result<RegimeTree>,
    ) -> Result<Self> {
        let trees = m
            .trees
            .into_iter()
            .map(|t| {
                Ok(ForestTree {
                    tree: load(&t.file)?,
                    index: t.index,
                    seed: t.seed,
                    features: t.features,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            family: m.family,
            plan: m.plan,
            max_depth: m.max_depth,
            trees,
            dropped: m.dropped,
        })
    }
}
