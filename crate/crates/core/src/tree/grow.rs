//! Greedy tree growth with partial re-estimation, and depth tuning on the
//! validation segment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RegimeTree;
use crate::engine::{self, fit_baseline, fit_mle, FitOptions, FitResult, FreeSet, GasParams, ModelSpec};
use crate::error::{Error, Result};
use crate::evaluation::{self, LossKind};
use crate::series::SeriesView;

/// Quantile levels `num/den`, kept rational so grids on integer data are
/// exact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantileGrid {
    pub den: u32,
    pub nums: Vec<u32>,
}

impl Default for QuantileGrid {
    /// 0.05, 0.10, ..., 0.95.
    fn default() -> Self {
        Self {
            den: 20,
            nums: (1..20).collect(),
        }
    }
}

/// Deduplicated 5%..95% empirical quantiles of `values`.
pub fn threshold_grid(values: &[f64]) -> Vec<f64> {
    threshold_grid_at(values, &QuantileGrid::default())
}

/// Empirical quantiles with plotting position h = (n+1)p (interpolating
/// between order statistics, clamped to the sample range), deduplicated.
pub fn threshold_grid_at(values: &[f64], grid: &QuantileGrid) -> Vec<f64> {
    let mut x: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    x.sort_by(f64::total_cmp);
    let mut out = sorted_quantiles(&x, grid);
    out.dedup();
    out
}

/// Quantiles of already sorted, NaN-free data at the levels of `grid`,
/// without deduplication.
pub(crate) fn sorted_quantiles(x: &[f64], grid: &QuantileGrid) -> Vec<f64> {
    if x.is_empty() || grid.den == 0 {
        return Vec::new();
    }
    let n = x.len() as u64;
    let den = u64::from(grid.den);
    grid.nums
        .iter()
        .map(|&num| {
            let h = (n + 1) * u64::from(num);
            let lo = h / den;
            let rem = h % den;
            if lo < 1 {
                x[0]
            } else if lo >= n {
                x[x.len() - 1]
            } else {
                let a = x[lo as usize - 1];
                let b = x[lo as usize];
                if rem == 0 {
                    a
                } else {
                    (a * den as f64 + rem as f64 * (b - a)) / den as f64
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowConfig {
    /// Number of greedy split iterations M.
    pub max_depth: usize,
    /// Minimum number of estimation observations per leaf.
    pub min_leaf: usize,
    /// Minimum gain in mean log likelihood for a split to be accepted.
    pub min_improvement: f64,
    pub grid: QuantileGrid,
    #[serde(skip)]
    pub fit: FitOptions,
}

impl Default for GrowConfig {
    fn default() -> Self {
        Self {
            max_depth: 3,
            min_leaf: 100,
            min_improvement: 1e-6,
            grid: QuantileGrid::default(),
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRecord {
    pub iteration: usize,
    pub leaf: usize,
    pub variable: String,
    pub threshold: f64,
    /// Mean log likelihood of the best candidate with other leaves frozen.
    pub criterion: f64,
    /// Mean log likelihood after re-estimating all parameters.
    pub loglik: f64,
}

#[derive(Debug, Clone)]
pub struct GrowOutput {
    pub tree: RegimeTree,
    pub trace: Vec<GrowthRecord>,
    /// Tree after each accepted iteration; entry 0 is the baseline.
    pub snapshots: Vec<RegimeTree>,
    /// Mean log likelihood after each iteration, aligned with `snapshots`.
    pub logliks: Vec<f64>,
    pub baseline: FitResult,
    /// Initial filter state on the growth sample.
    pub f0: f64,
}

/// Result of scoring one candidate split.
#[derive(Debug, Clone)]
pub struct CandidateFit {
    pub criterion: f64,
    pub params: GasParams,
    pub leaf_ids: Vec<u32>,
}

/// Splits leaf `leaf` at `z[·][col] <= threshold` and fits only the two
/// children, starting both from the parent block, with all other leaves
/// and ν frozen. Returns the mean log likelihood on the whole sample.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_candidate_split(
    spec: &ModelSpec,
    y: SeriesView<'_>,
    z: &[Vec<f64>],
    params: &GasParams,
    leaf_ids: &[u32],
    f0: f64,
    leaf: usize,
    col: usize,
    threshold: f64,
    opts: &FitOptions,
) -> Result<CandidateFit> {
    let new_leaf = params.leaves.len() as u32;
    let ids: Vec<u32> = leaf_ids
        .iter()
        .zip(z)
        .map(|(&id, row)| {
            if id as usize == leaf && row[col] > threshold {
                new_leaf
            } else {
                id
            }
        })
        .collect();
    let mut start = params.clone();
    start.leaves.push(params.leaves[leaf]);
    let free = FreeSet {
        leaves: vec![leaf, new_leaf as usize],
        nu: false,
    };
    let fit = fit_mle(spec, y, &ids, f0, &[start], &free, opts)?;
    Ok(CandidateFit {
        criterion: fit.loglik,
        params: fit.params,
        leaf_ids: ids,
    })
}

struct Candidate {
    leaf: usize,
    col: usize,
    threshold: f64,
}

fn candidates(
    z: &[Vec<f64>],
    leaf_ids: &[u32],
    n_leaves: usize,
    state_vars: &[usize],
    cfg: &GrowConfig,
) -> Vec<Candidate> {
    let mut out = Vec::new();
    for leaf in 0..n_leaves {
        let rows: Vec<usize> = (0..leaf_ids.len()).filter(|&t| leaf_ids[t] as usize == leaf).collect();
        if rows.len() < 2 * cfg.min_leaf {
            continue;
        }
        for &col in state_vars {
            let values: Vec<f64> = rows.iter().map(|&t| z[t][col]).collect();
            for c in threshold_grid_at(&values, &cfg.grid) {
                let left = values.iter().filter(|&&v| v <= c).count();
                if left >= cfg.min_leaf && values.len() - left >= cfg.min_leaf {
                    out.push(Candidate {
                        leaf,
                        col,
                        threshold: c,
                    });
                }
            }
        }
    }
    out
}

fn check_inputs(y: SeriesView<'_>, z: &[Vec<f64>], names: &[String], state_vars: &[usize]) -> Result<()> {
    if z.len() != y.len() {
        return Err(Error::Data(format!("{} state rows for {} observations", z.len(), y.len())));
    }
    for &c in state_vars {
        if c >= names.len() {
            return Err(Error::Config(format!("state variable index {c} out of range")));
        }
        if let Some(t) = z.iter().position(|r| r.get(c).is_none_or(|v| v.is_nan())) {
            return Err(Error::MissingState {
                variable: names[c].clone(),
                row: t,
            });
        }
    }
    Ok(())
}

/// Grows a tree on `y` with splits over the columns `state_vars` of `z`.
///
/// Each iteration scores every admissible (leaf, variable, threshold)
/// candidate with the other leaves frozen, accepts the best one (ties go to
/// the lowest leaf, then column, then threshold) and re-estimates all leaf
/// blocks and ν jointly. Growth stops after `max_depth` iterations or when
/// no candidate gains at least `min_improvement`.
pub fn grow(
    spec: &ModelSpec,
    y: SeriesView<'_>,
    z: &[Vec<f64>],
    names: &[String],
    state_vars: &[usize],
    cfg: &GrowConfig,
) -> Result<GrowOutput> {
    spec.validate()?;
    if cfg.max_depth > 6 {
        return Err(Error::Config(format!("max depth {} outside 0..=6", cfg.max_depth)));
    }
    check_inputs(y, z, names, state_vars)?;
    let mut vars = state_vars.to_vec();
    vars.sort_unstable();
    vars.dedup();

    let f0 = engine::initial_state(spec.family, y)?;
    let baseline = fit_baseline(spec, y, f0, &cfg.fit)?;
    let mut tree = RegimeTree::single(spec.family, &baseline.params);
    let mut params = baseline.params.clone();
    let mut ids = vec![0u32; y.len()];
    let mut current = baseline.loglik;
    let mut trace = Vec::new();
    let mut snapshots = vec![tree.clone()];
    let mut logliks = vec![current];

    for iteration in 1..=cfg.max_depth {
        let cands = candidates(z, &ids, params.leaves.len(), &vars, cfg);
        let fits: Vec<Option<CandidateFit>> = cands
            .par_iter()
            .map(|c| {
                match evaluate_candidate_split(spec, y, z, &params, &ids, f0, c.leaf, c.col, c.threshold, &cfg.fit) {
                    Ok(fit) if fit.criterion.is_finite() => Some(fit),
                    Ok(_) => None,
                    Err(e) => {
                        log::warn!(
                            "candidate split leaf {} on {} at {} discarded: {e}",
                            c.leaf,
                            names[c.col],
                            c.threshold
                        );
                        None
                    }
                }
            })
            .collect();
        let mut best: Option<usize> = None;
        for (i, f) in fits.iter().enumerate() {
            if let Some(f) = f {
                if best.is_none_or(|b| f.criterion > fits[b].as_ref().expect("kept").criterion) {
                    best = Some(i);
                }
            }
        }
        let Some(bi) = best else { break };
        let cand = &cands[bi];
        let fit = fits[bi].as_ref().expect("kept");
        if fit.criterion - current < cfg.min_improvement {
            break;
        }
        let new_leaf = params.leaves.len();
        tree.split_leaf(cand.leaf, &names[cand.col], cand.threshold, fit.params.leaves[new_leaf]);
        ids.clone_from(&fit.leaf_ids);
        params = fit.params.clone();
        current = fit.criterion;

        let free = FreeSet::all(params.leaves.len(), spec.family);
        match fit_mle(spec, y, &ids, f0, &[params.clone()], &free, &cfg.fit) {
            Ok(refit) if refit.loglik >= current => {
                params = refit.params;
                current = refit.loglik;
            }
            Ok(_) => {}
            Err(e) => log::warn!("joint re-estimation after split {iteration} failed: {e}"),
        }
        tree.set_params(&params);
        trace.push(GrowthRecord {
            iteration,
            leaf: cand.leaf,
            variable: names[cand.col].clone(),
            threshold: cand.threshold,
            criterion: fit.criterion,
            loglik: current,
        });
        snapshots.push(tree.clone());
        logliks.push(current);
    }
    Ok(GrowOutput {
        tree,
        trace,
        snapshots,
        logliks,
        baseline,
        f0,
    })
}

/// Data for depth tuning. Rows `..est_end` are used for growth and rows
/// `est_end..val_end` for validation; nothing after `val_end` is read.
#[derive(Debug, Clone, Copy)]
pub struct TuneInput<'a> {
    pub y: SeriesView<'a>,
    pub z: &'a [Vec<f64>],
    pub names: &'a [String],
    pub proxy: Option<&'a [f64]>,
    pub est_end: usize,
    pub val_end: usize,
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    /// Chosen M.
    pub max_depth: usize,
    pub tree: RegimeTree,
    /// Mean validation loss for each M of the grid.
    pub validation_loss: Vec<(usize, f64)>,
    pub growth: GrowOutput,
}

/// Grows once to the largest M of `m_grid` and picks the M whose tree has
/// the lowest mean validation loss; ties go to the smaller M. M = 0 is the
/// unsplit baseline, so a grid containing 0 lets regime-free data fall back
/// to plain GAS.
pub fn tune_depth(
    spec: &ModelSpec,
    input: &TuneInput<'_>,
    state_vars: &[usize],
    m_grid: &[usize],
    cfg: &GrowConfig,
    loss: LossKind,
) -> Result<TuneResult> {
    let TuneInput {
        y,
        z,
        names,
        proxy,
        est_end,
        val_end,
    } = *input;
    if !(est_end < val_end && val_end <= y.len() && z.len() >= val_end) {
        return Err(Error::Data(format!(
            "bad segments: estimation ..{est_end}, validation ..{val_end}, {} rows",
            y.len()
        )));
    }
    let mut grid = m_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let top = *grid.last().ok_or_else(|| Error::Config("empty depth grid".into()))?;
    let growth = grow(
        spec,
        y.head(est_end),
        &z[..est_end],
        names,
        state_vars,
        &GrowConfig {
            max_depth: top,
            ..cfg.clone()
        },
    )?;

    let y_ev = y.head(val_end);
    let mut cache: Vec<Option<f64>> = vec![None; growth.snapshots.len()];
    let mut validation_loss = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64, usize)> = None;
    for &m in &grid {
        let snap = m.min(growth.snapshots.len() - 1);
        let value = match cache[snap] {
            Some(v) => v,
            None => {
                let tree = &growth.snapshots[snap];
                let v = match tree.filter(y_ev, names, &z[..val_end], growth.f0) {
                    Ok(out) => {
                        let l = evaluation::losses(
                            loss,
                            spec.family,
                            &out.f[est_end..],
                            &out.loglik[est_end..],
                            proxy.map(|p| &p[est_end..val_end]),
                        )?;
                        evaluation::mean(&l)
                    }
                    Err(Error::FilterDivergence { t }) => {
                        log::warn!("tree with M={m} diverged at t={t} on the validation segment");
                        f64::INFINITY
                    }
                    Err(e) => return Err(e),
                };
                cache[snap] = Some(v);
                v
            }
        };
        validation_loss.push((m, value));
        if best.is_none_or(|(_, b, _)| value < b) {
            best = Some((m, value, snap));
        }
    }
    let (max_depth, value, snap) = best.expect("non-empty grid");
    if !value.is_finite() {
        return Err(Error::Estimation("every depth diverged on the validation segment".into()));
    }
    Ok(TuneResult {
        max_depth,
        tree: growth.snapshots[snap].clone(),
        validation_loss,
        growth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_on_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let g = threshold_grid(&v);
        assert_eq!(g.len(), 19);
        assert_eq!(g[0], 5.05);
        assert_eq!(g[9], 50.5);
        // The 40% level is in the grid.
        assert_eq!(g[7], 40.4);
    }

    #[test]
    fn constant_grid_collapses() {
        assert_eq!(threshold_grid(&[3.0; 50]), vec![3.0]);
        assert!(threshold_grid(&[]).is_empty());
    }

    #[test]
    fn grid_ignores_order() {
        let mut v: Vec<f64> = (0..57).map(|i| ((i * 31) % 57) as f64).collect();
        let a = threshold_grid(&v);
        v.reverse();
        assert_eq!(a, threshold_grid(&v));
    }
}
