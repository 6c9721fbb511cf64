//! Leave-one-out variable importance for GAS forests.

use super::{importance_entry, losses, Importance, LossKind};
use crate::engine::{self, ModelSpec};
use crate::error::{Error, Result};
use crate::forest::{fit_forest, forest_filter, BootstrapPlan, GasForest};
use crate::tree::{GrowConfig, TuneInput};

/// Test-segment losses of a fitted forest. The forest is filtered over the
/// whole sample from the estimation-window starting value and losses are
/// taken on rows `val_end..`.
pub fn forest_test_losses(forest: &GasForest, input: &TuneInput<'_>, kind: LossKind) -> Result<Vec<f64>> {
    let n = input.y.len();
    if input.val_end >= n {
        return Err(Error::Data("empty test segment".into()));
    }
    let f0 = engine::initial_state(forest.family, input.y.head(input.est_end))?;
    let out = forest_filter(forest, input.y, input.names, input.z, f0)?;
    let v = input.val_end;
    losses(
        kind,
        forest.family,
        &out.f[v..],
        &out.loglik[v..],
        input.proxy.map(|p| &p[v..n]),
    )
}

/// For every variable in `state_vars`, refits the forest on the estimation
/// window without it (same master seed) and compares test-segment losses
/// with the full forest. Positive `delta_loss` means the variable helps.
pub fn variable_importance(
    spec: &ModelSpec,
    input: &TuneInput<'_>,
    state_vars: &[usize],
    plan: &BootstrapPlan,
    cfg: &GrowConfig,
    kind: LossKind,
) -> Result<Vec<Importance>> {
    let e = input.est_end;
    let fit = |vars: &[usize]| {
        fit_forest(spec, input.y.head(e), &input.z[..e], input.names, vars, plan, cfg)
    };
    let full = forest_test_losses(&fit(state_vars)?, input, kind)?;
    state_vars
        .iter()
        .map(|&k| {
            let reduced_vars: Vec<usize> = state_vars.iter().copied().filter(|&c| c != k).collect();
            let reduced = forest_test_losses(&fit(&reduced_vars)?, input, kind)?;
            importance_entry(&input.names[k], &reduced, &full)
        })
        .collect()
}
